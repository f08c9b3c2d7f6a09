#pragma once

// Experiment configuration with JSON (de)serialization. Every field has a
// default; a partial JSON document overrides only the keys it names.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "relscan/dataset.hpp"
#include "relscan/error.hpp"
#include "relscan/metrics.hpp"
#include "relscan/profiler.hpp"
#include "relscan/regression.hpp"
#include "relscan/solver.hpp"
#include "relscan/validation.hpp"

namespace relscan {

struct ValidationConfig {
    double alpha = -0.1;
    double beta = 4.0;
    std::size_t iterations = 20;
    double tol = 1e-10;
    std::vector<InitStrategy> strategies{InitStrategy::near_root, InitStrategy::moderate, InitStrategy::random_box};

    bool operator==(const ValidationConfig&) const = default;
};

struct PipelineConfig {
    ParamGrid grid;
    int degree = 7;
    std::size_t n_runs = 1000;
    std::size_t iterations = 200;
    InitStrategy init = InitStrategy::random_box;
    StabilizationConfig stabilization;
    EmbeddingConfig embedding;
    std::size_t smooth_window = 4;
    std::size_t window_start = 10;   // effective start is max(window_start, L + h_max)
    std::size_t window_stop = 200;
    double epsilon = 1e-8;
    HorizonSchedule horizons;
    double random_test_fraction = 0.40;
    double center_train_fraction = 0.60;
    std::uint64_t split_seed = 7;
    double good_fraction = 0.20;
    std::size_t histogram_bin_width = 5;
    ProfileIndexOrigin index_origin = ProfileIndexOrigin::lookback;
    std::vector<ModelSpec> models = default_models();
    ValidationConfig validation;
    std::uint64_t global_seed = 20240601;
    std::string output_dir = "relscan_out";

    static std::vector<ModelSpec> default_models() {
        std::vector<ModelSpec> out;
        for (Family f : kAllFamilies) out.push_back(default_spec(f, 0));
        return out;
    }

    /// Small preset that runs end to end in minutes on one core.
    static PipelineConfig desk() {
        PipelineConfig c;
        c.grid.n_alpha = 20;
        c.grid.n_beta = 20;
        c.n_runs = 64;
        c.iterations = 120;
        return c;
    }

    MetricWindow metric_window() const {
        return MetricWindow::for_embedding(embedding, window_start, window_stop, epsilon);
    }

    std::size_t profile_length() const { return embedding.profile_length(iterations); }

    void validate() const {
        grid.validate();
        stabilization.validate();
        embedding.validate();
        if (degree < 1) throw ConfigError("degree must be >= 1");
        if (n_runs < 2) throw ConfigError("n_runs must be >= 2");
        if (iterations < embedding.lookback + embedding.h_max) throw ConfigError("iterations K must be >= L + h_max");
        if (smooth_window < 1) throw ConfigError("smooth_window must be >= 1");
        if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
        if (window_stop <= metric_window().t_start) throw ConfigError("metric window stop must exceed its start");
        if (horizons.start < 1 || horizons.step < 1 || horizons.max_T < horizons.start) {
            throw ConfigError("horizon schedule needs 1 <= start <= max_T and step >= 1");
        }
        if (!(random_test_fraction > 0.0 && random_test_fraction < 1.0)) throw ConfigError("random_test_fraction must lie in (0, 1)");
        if (!(center_train_fraction > 0.0 && center_train_fraction < 1.0)) throw ConfigError("center_train_fraction must lie in (0, 1)");
        if (!(good_fraction > 0.0 && good_fraction < 1.0)) throw ConfigError("good_fraction must lie in (0, 1)");
        if (histogram_bin_width < 1) throw ConfigError("histogram_bin_width must be >= 1");
        if (models.empty()) throw ConfigError("at least one model spec is required");
        for (std::size_t a = 0; a < models.size(); ++a) {
            models[a].validate();
            for (std::size_t b = 0; b < a; ++b)
                if (models[a].family == models[b].family) throw ConfigError("duplicate model family in config");
        }
        if (validation.strategies.empty()) throw ConfigError("validation needs at least one strategy");
        if (validation.iterations < 2 || !(validation.tol > 0.0)) throw ConfigError("invalid validation iterations or tol");
        if (output_dir.empty()) throw ConfigError("output_dir must be nonempty");
    }
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

inline std::string_view origin_name(ProfileIndexOrigin o) { return o == ProfileIndexOrigin::lookback ? "lookback" : "warmup"; }

inline ProfileIndexOrigin parse_origin(std::string_view s) {
    if (s == "lookback") return ProfileIndexOrigin::lookback;
    if (s == "warmup") return ProfileIndexOrigin::warmup;
    throw ConfigError("unknown index_origin: " + std::string(s));
}

} // namespace detail

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
    j = nlohmann::json{
        {"family", std::string(to_string(s.family))},
        {"seed", s.seed},
        {"knn", {{"k", s.knn.k}, {"distance_weighted", s.knn.distance_weighted}}},
        {"ridge", {{"l2", s.ridge.l2}}},
        {"elastic_net",
         {{"penalty", s.elastic_net.penalty},
          {"l1_ratio", s.elastic_net.l1_ratio},
          {"max_iter", s.elastic_net.max_iter},
          {"tol", s.elastic_net.tol}}},
        {"random_forest",
         {{"trees", s.forest.trees},
          {"max_depth", s.forest.max_depth},
          {"min_leaf", s.forest.min_leaf},
          {"feature_subsample", s.forest.feature_subsample},
          {"bootstrap", s.forest.bootstrap}}},
        {"grad_boost",
         {{"stages", s.boost.stages},
          {"depth", s.boost.depth},
          {"learning_rate", s.boost.learning_rate},
          {"subsample", s.boost.subsample},
          {"min_leaf", s.boost.min_leaf}}},
    };
}

inline void from_json(const nlohmann::json& j, ModelSpec& s) {
    using detail::read_if;
    if (!j.contains("family")) throw ConfigError("model spec needs a family");
    s.family = parse_family(j.at("family").get<std::string>());
    read_if(j, "seed", s.seed);
    if (auto it = j.find("knn"); it != j.end()) {
        read_if(*it, "k", s.knn.k);
        read_if(*it, "distance_weighted", s.knn.distance_weighted);
    }
    if (auto it = j.find("ridge"); it != j.end()) read_if(*it, "l2", s.ridge.l2);
    if (auto it = j.find("elastic_net"); it != j.end()) {
        read_if(*it, "penalty", s.elastic_net.penalty);
        read_if(*it, "l1_ratio", s.elastic_net.l1_ratio);
        read_if(*it, "max_iter", s.elastic_net.max_iter);
        read_if(*it, "tol", s.elastic_net.tol);
    }
    if (auto it = j.find("random_forest"); it != j.end()) {
        read_if(*it, "trees", s.forest.trees);
        read_if(*it, "max_depth", s.forest.max_depth);
        read_if(*it, "min_leaf", s.forest.min_leaf);
        read_if(*it, "feature_subsample", s.forest.feature_subsample);
        read_if(*it, "bootstrap", s.forest.bootstrap);
    }
    if (auto it = j.find("grad_boost"); it != j.end()) {
        read_if(*it, "stages", s.boost.stages);
        read_if(*it, "depth", s.boost.depth);
        read_if(*it, "learning_rate", s.boost.learning_rate);
        read_if(*it, "subsample", s.boost.subsample);
        read_if(*it, "min_leaf", s.boost.min_leaf);
    }
}

inline nlohmann::json to_json(const PipelineConfig& c) {
    nlohmann::json strategies = nlohmann::json::array();
    for (InitStrategy s : c.validation.strategies) strategies.push_back(std::string(to_string(s)));
    return nlohmann::json{
        {"grid",
         {{"alpha_min", c.grid.alpha_min},
          {"alpha_max", c.grid.alpha_max},
          {"beta_min", c.grid.beta_min},
          {"beta_max", c.grid.beta_max},
          {"n_alpha", c.grid.n_alpha},
          {"n_beta", c.grid.n_beta}}},
        {"degree", c.degree},
        {"n_runs", c.n_runs},
        {"iterations", c.iterations},
        {"init", std::string(to_string(c.init))},
        {"stabilization",
         {{"tail_floor_log", c.stabilization.tail_floor_log},
          {"divergence_bound", c.stabilization.divergence_bound},
          {"step_cap", c.stabilization.step_cap},
          {"guard_eps", c.stabilization.guard_eps}}},
        {"embedding",
         {{"lookback", c.embedding.lookback},
          {"h_min", c.embedding.h_min},
          {"h_max", c.embedding.h_max},
          {"k_neighbors", c.embedding.k_neighbors},
          {"internal_train_fraction", c.embedding.internal_train_fraction},
          {"error_floor", c.embedding.error_floor}}},
        {"smooth_window", c.smooth_window},
        {"metric_window", {{"start", c.window_start}, {"stop", c.window_stop}, {"epsilon", c.epsilon}}},
        {"horizons", {{"start", c.horizons.start}, {"step", c.horizons.step}, {"max_T", c.horizons.max_T}}},
        {"splits",
         {{"random_test_fraction", c.random_test_fraction},
          {"center_train_fraction", c.center_train_fraction},
          {"seed", c.split_seed}}},
        {"good_fraction", c.good_fraction},
        {"histogram_bin_width", c.histogram_bin_width},
        {"index_origin", std::string(detail::origin_name(c.index_origin))},
        {"models", c.models},
        {"validation",
         {{"alpha", c.validation.alpha},
          {"beta", c.validation.beta},
          {"iterations", c.validation.iterations},
          {"tol", c.validation.tol},
          {"strategies", strategies}}},
        {"global_seed", c.global_seed},
        {"output_dir", c.output_dir},
    };
}

/// Overlays `j` on `base`; keys absent from `j` keep their value in `base`.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {}) {
    using detail::read_if;
    PipelineConfig c = std::move(base);
    try {
        if (!j.is_object()) throw ConfigError("config root must be a JSON object");
        if (auto g = j.find("grid"); g != j.end()) {
            read_if(*g, "alpha_min", c.grid.alpha_min);
            read_if(*g, "alpha_max", c.grid.alpha_max);
            read_if(*g, "beta_min", c.grid.beta_min);
            read_if(*g, "beta_max", c.grid.beta_max);
            read_if(*g, "n_alpha", c.grid.n_alpha);
            read_if(*g, "n_beta", c.grid.n_beta);
        }
        read_if(j, "degree", c.degree);
        read_if(j, "n_runs", c.n_runs);
        read_if(j, "iterations", c.iterations);
        if (auto it = j.find("init"); it != j.end()) c.init = parse_init_strategy(it->get<std::string>());
        if (auto s = j.find("stabilization"); s != j.end()) {
            read_if(*s, "tail_floor_log", c.stabilization.tail_floor_log);
            read_if(*s, "divergence_bound", c.stabilization.divergence_bound);
            read_if(*s, "step_cap", c.stabilization.step_cap);
            read_if(*s, "guard_eps", c.stabilization.guard_eps);
        }
        if (auto e = j.find("embedding"); e != j.end()) {
            read_if(*e, "lookback", c.embedding.lookback);
            read_if(*e, "h_min", c.embedding.h_min);
            read_if(*e, "h_max", c.embedding.h_max);
            read_if(*e, "k_neighbors", c.embedding.k_neighbors);
            read_if(*e, "internal_train_fraction", c.embedding.internal_train_fraction);
            read_if(*e, "error_floor", c.embedding.error_floor);
        }
        read_if(j, "smooth_window", c.smooth_window);
        if (auto w = j.find("metric_window"); w != j.end()) {
            read_if(*w, "start", c.window_start);
            read_if(*w, "stop", c.window_stop);
            read_if(*w, "epsilon", c.epsilon);
        }
        if (auto h = j.find("horizons"); h != j.end()) {
            read_if(*h, "start", c.horizons.start);
            read_if(*h, "step", c.horizons.step);
            read_if(*h, "max_T", c.horizons.max_T);
        }
        if (auto s = j.find("splits"); s != j.end()) {
            read_if(*s, "random_test_fraction", c.random_test_fraction);
            read_if(*s, "center_train_fraction", c.center_train_fraction);
            read_if(*s, "seed", c.split_seed);
        }
        read_if(j, "good_fraction", c.good_fraction);
        read_if(j, "histogram_bin_width", c.histogram_bin_width);
        if (auto it = j.find("index_origin"); it != j.end()) c.index_origin = detail::parse_origin(it->get<std::string>());
        if (auto it = j.find("models"); it != j.end()) c.models = it->get<std::vector<ModelSpec>>();
        if (auto v = j.find("validation"); v != j.end()) {
            read_if(*v, "alpha", c.validation.alpha);
            read_if(*v, "beta", c.validation.beta);
            read_if(*v, "iterations", c.validation.iterations);
            read_if(*v, "tol", c.validation.tol);
            if (auto s = v->find("strategies"); s != v->end()) {
                c.validation.strategies.clear();
                for (const auto& name : *s) c.validation.strategies.push_back(parse_init_strategy(name.get<std::string>()));
            }
        }
        read_if(j, "global_seed", c.global_seed);
        read_if(j, "output_dir", c.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    return c;
}

inline PipelineConfig config_from_string(const std::string& text, PipelineConfig base = {}) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j, std::move(base));
}

inline std::string config_to_string(const PipelineConfig& c) { return to_json(c).dump(2) + "\n"; }

} // namespace relscan
