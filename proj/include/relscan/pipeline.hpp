#pragma once

// Stage-wise experiment runner. Each stage reads its inputs from files written
// by earlier stages, so any stage can be rerun on its own. A stage is skipped
// when the manifest from a previous run records the same input key and every
// file it produced still matches its content hash.

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "relscan/config.hpp"
#include "relscan/dataset.hpp"
#include "relscan/error.hpp"
#include "relscan/io.hpp"
#include "relscan/metrics.hpp"
#include "relscan/plot.hpp"
#include "relscan/profiler.hpp"
#include "relscan/regression.hpp"
#include "relscan/solver.hpp"
#include "relscan/validation.hpp"

namespace relscan {

enum class Stage { profile, metrics, dataset, train, evaluate, heatmap, curves, cost, validate, all };

inline constexpr std::array<Stage, 9> kAllStages = {Stage::profile, Stage::metrics, Stage::dataset,
                                                    Stage::train,   Stage::evaluate, Stage::heatmap,
                                                    Stage::curves,  Stage::cost,     Stage::validate};

inline std::string_view to_string(Stage s) {
    switch (s) {
    case Stage::profile: return "profile";
    case Stage::metrics: return "metrics";
    case Stage::dataset: return "dataset";
    case Stage::train: return "train";
    case Stage::evaluate: return "evaluate";
    case Stage::heatmap: return "heatmap";
    case Stage::curves: return "curves";
    case Stage::cost: return "cost";
    case Stage::validate: return "validate";
    case Stage::all: return "all";
    }
    return "?";
}

inline Stage parse_stage(std::string_view s) {
    for (Stage st : kAllStages)
        if (to_string(st) == s) return st;
    if (s == "all") return Stage::all;
    throw ConfigError("unknown stage: " + std::string(s));
}

inline std::vector<Stage> stage_dependencies(Stage s) {
    switch (s) {
    case Stage::profile: return {};
    case Stage::metrics: return {Stage::profile};
    case Stage::dataset: return {Stage::profile, Stage::metrics};
    case Stage::train: return {Stage::dataset};
    case Stage::evaluate: return {Stage::dataset, Stage::train};
    case Stage::heatmap: return {Stage::metrics, Stage::dataset, Stage::train, Stage::evaluate};
    case Stage::curves: return {Stage::metrics, Stage::evaluate};
    case Stage::cost: return {Stage::evaluate};
    case Stage::validate: return {};
    case Stage::all: return {kAllStages.begin(), kAllStages.end()};
    }
    return {};
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestFile {
    std::string path;   // relative to the output root, '/'-separated
    std::string role;
    std::string stage;
    std::string hash;
};

struct StageRecord {
    std::string name;
    std::string key;
    /// "completed" (ran in the recorded invocation), "resumed" (reused), or "failed".
    std::string status;
    double seconds = 0.0;
    std::vector<ManifestFile> files;
};

struct ArtifactManifest {
    fs::path root;
    nlohmann::json config;
    std::vector<StageRecord> stages;
    std::optional<std::string> error;

    const StageRecord* stage(std::string_view name) const {
        for (const auto& s : stages)
            if (s.name == name) return &s;
        return nullptr;
    }

    std::vector<ManifestFile> files() const {
        std::vector<ManifestFile> out;
        for (const auto& s : stages) out.insert(out.end(), s.files.begin(), s.files.end());
        return out;
    }
};

inline nlohmann::json to_json(const ArtifactManifest& m) {
    nlohmann::json stages = nlohmann::json::array();
    nlohmann::json files = nlohmann::json::array();
    for (const auto& s : m.stages) {
        nlohmann::json names = nlohmann::json::array();
        for (const auto& f : s.files) {
            names.push_back(f.path);
            files.push_back({{"path", f.path}, {"role", f.role}, {"stage", f.stage}, {"hash", f.hash}});
        }
        stages.push_back({{"name", s.name}, {"key", s.key}, {"status", s.status}, {"seconds", s.seconds}, {"files", names}});
    }
    nlohmann::json j{{"config", m.config}, {"stages", stages}, {"files", files}};
    if (m.error) j["error"] = *m.error;
    return j;
}

inline ArtifactManifest manifest_from_json(const nlohmann::json& j, const fs::path& root) {
    ArtifactManifest m;
    m.root = root;
    m.config = j.value("config", nlohmann::json::object());
    std::map<std::string, ManifestFile> by_path;
    for (const auto& f : j.value("files", nlohmann::json::array())) {
        ManifestFile mf{f.at("path").get<std::string>(), f.at("role").get<std::string>(), f.at("stage").get<std::string>(),
                        f.at("hash").get<std::string>()};
        by_path[mf.path] = mf;
    }
    for (const auto& s : j.value("stages", nlohmann::json::array())) {
        StageRecord rec;
        rec.name = s.at("name").get<std::string>();
        rec.key = s.at("key").get<std::string>();
        rec.status = s.at("status").get<std::string>();
        rec.seconds = s.at("seconds").get<double>();
        for (const auto& p : s.at("files")) {
            const auto it = by_path.find(p.get<std::string>());
            if (it == by_path.end()) throw RuntimeError("manifest lists a stage file without an entry: " + p.get<std::string>());
            rec.files.push_back(it->second);
        }
        m.stages.push_back(std::move(rec));
    }
    if (j.contains("error")) m.error = j.at("error").get<std::string>();
    return m;
}

inline std::optional<ArtifactManifest> load_manifest(const fs::path& root) {
    const fs::path path = root / "manifest.json";
    if (!fs::exists(path)) return std::nullopt;
    try {
        return manifest_from_json(nlohmann::json::parse(read_file(path)), root);
    } catch (const std::exception&) {
        return std::nullopt;   // an unreadable manifest only disables resuming
    }
}

/// Files listed in the manifest that are missing or whose content changed.
inline std::vector<std::string> verify_manifest(const ArtifactManifest& m) {
    std::vector<std::string> problems;
    for (const auto& f : m.files()) {
        const fs::path p = m.root / f.path;
        if (!fs::exists(p)) problems.push_back("missing: " + f.path);
        else if (file_hash(p) != f.hash) problems.push_back("hash mismatch: " + f.path);
    }
    return problems;
}

// ---------------------------------------------------------------------------
// Artifact naming and loaders

inline std::string profile_file(std::size_t i, std::size_t j) { return fmt::format("profiles/{}_{}.csv", i, j); }
inline std::string dataset_file(std::size_t T) { return fmt::format("datasets/T{}.csv", T); }
inline std::string split_file(SplitKind k) { return fmt::format("splits/{}.json", to_string(k)); }
inline std::string prediction_file(SplitKind k, Family f, std::size_t T) {
    return fmt::format("predictions/{}/{}_T{}.csv", to_string(k), to_string(f), T);
}
inline std::string best_file(SplitKind k) { return fmt::format("best_by_T_{}.csv", to_string(k)); }

inline constexpr std::array<SplitKind, 2> kAllSplits = {SplitKind::random, SplitKind::center};

inline nlohmann::json to_json(const SplitManifest& m) {
    return nlohmann::json{{"kind", std::string(to_string(m.kind))},
                          {"fraction", m.fraction},
                          {"seed", m.seed},
                          {"train_ids", m.train_ids},
                          {"test_ids", m.test_ids}};
}

inline SplitManifest split_from_json(const nlohmann::json& j) {
    SplitManifest m;
    m.kind = parse_split_kind(j.at("kind").get<std::string>());
    m.fraction = j.at("fraction").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train_ids = j.at("train_ids").get<std::vector<std::size_t>>();
    m.test_ids = j.at("test_ids").get<std::vector<std::size_t>>();
    return m;
}

inline SplitManifest load_split(const fs::path& root, SplitKind k) {
    return split_from_json(nlohmann::json::parse(read_file(root / split_file(k))));
}

inline ProxyProfile load_profile(const fs::path& path, std::size_t lookback, std::size_t smooth_window) {
    const CsvTable t = read_csv(path);
    const std::size_t c_t = t.column("t_end");
    const std::size_t c_raw = t.column("raw");
    const std::size_t c_s = t.column("smoothed");
    ProxyProfile p;
    p.lookback = lookback;
    p.smooth_window = smooth_window;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (parse_count(t.rows[r][c_t]) != lookback + r) throw RuntimeError("profile t_end column is inconsistent: " + path.string());
        p.raw.push_back(parse_real(t.rows[r][c_raw]));
        p.smoothed.push_back(parse_real(t.rows[r][c_s]));
    }
    return p;
}

struct MetricsRow {
    std::size_t i = 0;
    std::size_t j = 0;
    double alpha = 0.0;
    double beta = 0.0;
    ProfileMetrics metrics;
    double diverged_fraction = 0.0;
};

inline std::vector<MetricsRow> load_metrics_grid(const fs::path& root) {
    const CsvTable t = read_csv(root / "metrics_grid.csv");
    std::vector<MetricsRow> out;
    for (const auto& row : t.rows) {
        MetricsRow m;
        m.i = parse_count(row[t.column("i")]);
        m.j = parse_count(row[t.column("j")]);
        m.alpha = parse_real(row[t.column("alpha")]);
        m.beta = parse_real(row[t.column("beta")]);
        m.metrics.s_min = parse_real(row[t.column("s_min")]);
        m.metrics.s_mom = parse_real(row[t.column("s_mom")]);
        m.metrics.t_min = parse_count(row[t.column("t_min")]);
        m.metrics.y_min = parse_real(row[t.column("y_min")]);
        const std::string& enter = row[t.column("t_enter_neg")];
        if (!enter.empty()) m.metrics.t_enter_neg = parse_count(enter);
        m.metrics.m0 = parse_real(row[t.column("m0")]);
        m.metrics.t_bar = parse_real(row[t.column("t_bar")]);
        m.diverged_fraction = parse_real(row[t.column("diverged_fraction")]);
        out.push_back(m);
    }
    return out;
}

inline HorizonDataset load_dataset(const fs::path& root, std::size_t T) {
    const CsvTable t = read_csv(root / dataset_file(T));
    if (t.header.size() != T + 2) throw RuntimeError(fmt::format("dataset T{} has {} columns", T, t.header.size()));
    HorizonDataset ds;
    ds.horizon = T;
    ds.features = Matrix(t.rows.size(), T);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ds.point_ids.push_back(parse_count(t.rows[r][0]));
        for (std::size_t c = 0; c < T; ++c) ds.features(r, c) = parse_real(t.rows[r][c + 1]);
        ds.targets.push_back(parse_real(t.rows[r][T + 1]));
    }
    return ds;
}

inline std::vector<EvalRecord> load_eval_records(const fs::path& root) {
    const CsvTable t = read_csv(root / "eval_records.csv");
    std::vector<EvalRecord> out;
    for (const auto& row : t.rows) {
        EvalRecord r;
        r.split = parse_split_kind(row[t.column("split")]);
        r.family = parse_family(row[t.column("family")]);
        r.horizon = parse_count(row[t.column("T")]);
        r.mae = parse_real(row[t.column("mae")]);
        r.rmse = parse_real(row[t.column("rmse")]);
        r.r2 = parse_real(row[t.column("r2")]);
        r.fit_seconds = parse_real(row[t.column("fit_s")]);
        r.test_seconds = parse_real(row[t.column("test_s")]);
        r.test_per_sample_seconds = parse_real(row[t.column("test_per_sample_s")]);
        out.push_back(r);
    }
    return out;
}

inline std::vector<EvalRecord> records_for_split(std::span<const EvalRecord> records, SplitKind k) {
    std::vector<EvalRecord> out;
    for (const auto& r : records)
        if (r.split == k) out.push_back(r);
    return out;
}

inline nlohmann::json load_timing_summary(const fs::path& root) {
    return nlohmann::json::parse(read_file(root / "timing/summary.json"));
}

// ---------------------------------------------------------------------------
// Runner

struct PipelineOptions {
    std::size_t workers = 0;   // 0: one per hardware thread
    std::function<void(std::string_view)> log;
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig config, PipelineOptions options = {})
        : cfg_(std::move(config)), opts_(std::move(options)), root_(cfg_.output_dir) {
        cfg_.validate();
    }

    /// Runs `target` and everything it depends on; returns the manifest as written.
    ArtifactManifest run(Stage target = Stage::all) {
        fs::create_directories(root_);
        if (auto prev = load_manifest(root_)) previous_ = std::move(*prev);
        manifest_ = ArtifactManifest{};
        manifest_.root = root_;
        manifest_.config = to_json(cfg_);
        // Records of stages this invocation does not touch are carried over.
        for (const auto& s : previous_.stages)
            if (s.status != "failed") carried_[s.name] = s;

        {
            StageRecord rec{"config", "", "completed", 0.0, {}};
            rec.files.push_back(write_artifact("config.json", config_to_string(cfg_), "config snapshot", "config"));
            manifest_.stages.push_back(std::move(rec));
        }
        if (target == Stage::all) {
            for (Stage s : kAllStages) ensure(s);
        } else {
            ensure(target);
        }
        write_manifest();
        return snapshot();
    }

    const PipelineConfig& config() const noexcept { return cfg_; }

private:
    // ---- stage bookkeeping ------------------------------------------------

    void log(const std::string& msg) const {
        if (opts_.log) opts_.log(msg);
    }

    ManifestFile write_artifact(const std::string& rel, std::string_view content, std::string role, std::string stage) {
        write_file(root_ / rel, content);
        return ManifestFile{rel, std::move(role), std::move(stage), hex64(fnv1a(content))};
    }

    void emit(const std::string& rel, std::string_view content, std::string role) {
        current_.push_back(write_artifact(rel, content, std::move(role), current_stage_));
    }

    void adopt(const fs::path& absolute, std::string role) {
        const std::string rel = fs::relative(absolute, root_).generic_string();
        current_.push_back(ManifestFile{rel, std::move(role), current_stage_, file_hash(absolute)});
    }

    const StageRecord* finished(Stage s) const {
        for (const auto& r : manifest_.stages)
            if (r.name == to_string(s)) return &r;
        return nullptr;
    }

    nlohmann::json config_section(Stage s) const {
        const nlohmann::json c = to_json(cfg_);
        auto pick = [&](std::initializer_list<const char*> keys) {
            nlohmann::json out = nlohmann::json::object();
            for (const char* k : keys) out[k] = c.at(k);
            return out;
        };
        switch (s) {
        case Stage::profile:
            return pick({"grid", "degree", "n_runs", "iterations", "init", "stabilization", "embedding", "smooth_window",
                         "global_seed"});
        case Stage::metrics:
            return pick({"embedding", "metric_window", "good_fraction", "histogram_bin_width", "index_origin"});
        case Stage::dataset: return pick({"horizons", "splits", "grid"});
        case Stage::train: return pick({"models", "global_seed"});
        case Stage::cost: return pick({"embedding", "iterations"});
        case Stage::validate: return pick({"validation", "degree", "stabilization", "global_seed"});
        default: return nlohmann::json::object();
        }
    }

    std::string stage_key(Stage s) const {
        std::string text = std::string(to_string(s)) + "\n" + config_section(s).dump() + "\n";
        for (Stage d : stage_dependencies(s)) {
            const StageRecord* rec = finished(d);
            if (rec == nullptr) throw RuntimeError("dependency did not run: " + std::string(to_string(d)));
            text += std::string(to_string(d)) + ":";
            for (const auto& f : rec->files) text += f.path + "=" + f.hash + ";";
            text += "\n";
        }
        return hex64(fnv1a(text));
    }

    bool reusable(const StageRecord& rec, const std::string& key) const {
        if (rec.key != key) return false;
        for (const auto& f : rec.files) {
            const fs::path p = root_ / f.path;
            if (!fs::exists(p) || file_hash(p) != f.hash) return false;
        }
        return true;
    }

    void ensure(Stage s) {
        if (finished(s) != nullptr) return;
        for (Stage d : stage_dependencies(s)) ensure(d);
        const std::string name(to_string(s));
        const std::string key = stage_key(s);
        if (auto it = carried_.find(name); it != carried_.end() && reusable(it->second, key)) {
            StageRecord rec = it->second;
            rec.status = "resumed";
            manifest_.stages.push_back(std::move(rec));
            carried_.erase(it);
            log(fmt::format("[{}] up to date, reusing outputs", name));
            write_manifest();
            return;
        }
        log(fmt::format("[{}] running", name));
        current_.clear();
        current_stage_ = name;
        const auto start = std::chrono::steady_clock::now();
        try {
            dispatch(s);
        } catch (const std::exception& e) {
            carried_.erase(name);
            manifest_.stages.push_back(StageRecord{name, key, "failed", seconds_since(start), current_});
            manifest_.error = fmt::format("stage {} failed: {}", name, e.what());
            write_manifest();
            throw;
        }
        // Drop files the previous run of this stage wrote but this run did not.
        if (auto it = carried_.find(name); it != carried_.end()) {
            std::set<std::string> now;
            for (const auto& f : current_) now.insert(f.path);
            for (const auto& f : it->second.files)
                if (!now.contains(f.path)) fs::remove(root_ / f.path);
            carried_.erase(it);
        }
        manifest_.stages.push_back(StageRecord{name, key, "completed", seconds_since(start), current_});
        log(fmt::format("[{}] done in {:.2f} s, {} files", name, manifest_.stages.back().seconds, current_.size()));
        write_manifest();
    }

    static double seconds_since(std::chrono::steady_clock::time_point start) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }

    /// Current stages followed by untouched stages from an earlier invocation.
    ArtifactManifest snapshot() const {
        ArtifactManifest out = manifest_;
        for (Stage s : kAllStages) {
            const std::string name(to_string(s));
            if (out.stage(name) == nullptr) {
                if (auto it = carried_.find(name); it != carried_.end()) out.stages.push_back(it->second);
            }
        }
        return out;
    }

    void write_manifest() const { write_file(root_ / "manifest.json", to_json(snapshot()).dump(2) + "\n"); }

    void dispatch(Stage s) {
        switch (s) {
        case Stage::profile: return stage_profile();
        case Stage::metrics: return stage_metrics();
        case Stage::dataset: return stage_dataset();
        case Stage::train: return stage_train();
        case Stage::evaluate: return stage_evaluate();
        case Stage::heatmap: return stage_heatmap();
        case Stage::curves: return stage_curves();
        case Stage::cost: return stage_cost();
        case Stage::validate: return stage_validate();
        case Stage::all: break;
        }
    }

    std::vector<std::size_t> horizons() const { return horizon_list(cfg_.horizons, cfg_.profile_length()); }

    // ---- stages --------------------------------------------------------------

    void stage_profile() {
        const auto problem = PolynomialProblem::roots_of_unity(cfg_.degree);
        const std::size_t n = cfg_.grid.size();
        std::vector<std::string> texts(n);
        std::vector<double> diverged(n);
        std::vector<double> frozen(n);
        parallel_for(n, opts_.workers, [&](std::size_t id) {
            const GridPoint p = cfg_.grid.point(id, cfg_.global_seed);
            const auto ensemble = run_ensemble(p, problem, cfg_.n_runs, cfg_.iterations, cfg_.stabilization, cfg_.init);
            std::vector<MicroSeries> series;
            series.reserve(ensemble.size());
            std::size_t n_div = 0;
            std::size_t n_frozen = 0;
            for (const auto& traj : ensemble) {
                series.push_back(micro_series(traj, cfg_.stabilization));
                n_div += traj.diverged ? 1 : 0;
                n_frozen += traj.frozen_from ? 1 : 0;
            }
            ProxyProfile prof = proxy_profile(series, cfg_.embedding, cfg_.iterations, p.seed);
            apply_smoothing(prof, cfg_.smooth_window);
            CsvWriter csv({"j", "t_end", "raw", "smoothed"});
            for (std::size_t k = 0; k < prof.size(); ++k) {
                csv.add_row({std::to_string(k + 1), std::to_string(prof.t_end_of(k)), format_real(prof.raw[k]),
                             format_real(prof.smoothed[k])});
            }
            texts[id] = csv.str();
            diverged[id] = static_cast<double>(n_div) / static_cast<double>(cfg_.n_runs);
            frozen[id] = static_cast<double>(n_frozen) / static_cast<double>(cfg_.n_runs);
        });
        CsvWriter summary({"i", "j", "alpha", "beta", "diverged_fraction", "frozen_fraction"});
        for (std::size_t id = 0; id < n; ++id) {
            const GridPoint p = cfg_.grid.point(id, cfg_.global_seed);
            emit(profile_file(p.i, p.j), texts[id], "proxy profile");
            summary.add_row({std::to_string(p.i), std::to_string(p.j), format_real(p.alpha), format_real(p.beta),
                             format_real(diverged[id]), format_real(frozen[id])});
        }
        emit("profiles/ensemble_summary.csv", summary.str(), "ensemble summary");
    }

    void stage_metrics() {
        const std::size_t n = cfg_.grid.size();
        const CsvTable summary = read_csv(root_ / "profiles/ensemble_summary.csv");
        if (summary.rows.size() != n) throw RuntimeError("ensemble summary does not cover the grid");
        const MetricWindow window = cfg_.metric_window();
        std::vector<ProfileMetrics> metrics(n);
        parallel_for(n, opts_.workers, [&](std::size_t id) {
            const GridPoint p = cfg_.grid.point(id, 0);
            const ProxyProfile prof = load_profile(root_ / profile_file(p.i, p.j), cfg_.embedding.lookback, cfg_.smooth_window);
            metrics[id] = compute_metrics(prof, window);
        });

        CsvWriter grid_csv({"i", "j", "alpha", "beta", "s_min", "s_mom", "t_min", "y_min", "t_enter_neg", "m0", "t_bar",
                            "diverged_fraction"});
        std::vector<double> s_mom(n);
        for (std::size_t id = 0; id < n; ++id) {
            const GridPoint p = cfg_.grid.point(id, 0);
            const ProfileMetrics& m = metrics[id];
            s_mom[id] = m.s_mom;
            grid_csv.add_row({std::to_string(p.i), std::to_string(p.j), format_real(p.alpha), format_real(p.beta),
                              format_real(m.s_min), format_real(m.s_mom), std::to_string(m.t_min), format_real(m.y_min),
                              m.t_enter_neg ? std::to_string(*m.t_enter_neg) : std::string(), format_real(m.m0),
                              format_real(m.t_bar), summary.rows[id][summary.column("diverged_fraction")]});
        }
        emit("metrics_grid.csv", grid_csv.str(), "reliability metrics per grid point");

        const GoodSubset good = good_subset_threshold(s_mom, cfg_.good_fraction);
        const TimingSummary timing = timing_summary(metrics, good.mask, cfg_.embedding.lookback, cfg_.embedding.h_max,
                                                    cfg_.histogram_bin_width, cfg_.index_origin);
        auto hist_csv = [](const std::vector<HistogramBin>& bins) {
            CsvWriter csv({"bin_left", "count_good", "count_rest"});
            for (const auto& b : bins)
                csv.add_row({std::to_string(b.bin_left), std::to_string(b.count_good), std::to_string(b.count_rest)});
            return csv.str();
        };
        emit("timing/t_min_hist.csv", hist_csv(timing.t_min_hist), "t_min histogram (good vs rest)");
        emit("timing/t_enter_neg_hist.csv", hist_csv(timing.t_enter_neg_hist), "t_enter_neg histogram (good vs rest)");
        const auto median_t = static_cast<std::size_t>(std::llround(timing.median_t_min_good));
        const nlohmann::json js{
            {"good_fraction", cfg_.good_fraction},
            {"good_threshold_s_mom", good.threshold},
            {"good_count", good.selected_count},
            {"grid_points", n},
            {"median_t_min_good", timing.median_t_min_good},
            {"index_origin", std::string(detail::origin_name(cfg_.index_origin))},
            {"T_min", timing.T_min},
            {"T_min_lookback_origin",
             profile_index_for(median_t, cfg_.embedding.lookback, cfg_.embedding.h_max, ProfileIndexOrigin::lookback)},
            {"T_min_warmup_origin",
             profile_index_for(median_t, cfg_.embedding.lookback, cfg_.embedding.h_max, ProfileIndexOrigin::warmup)},
            {"metric_window", {{"t_start", window.t_start}, {"t_stop", window.t_stop}, {"epsilon", window.epsilon}}},
        };
        emit("timing/summary.json", js.dump(2) + "\n", "timing summary");
    }

    void stage_dataset() {
        const std::size_t n = cfg_.grid.size();
        std::vector<std::vector<double>> raw(n);
        for (std::size_t id = 0; id < n; ++id) {
            const GridPoint p = cfg_.grid.point(id, 0);
            raw[id] = load_profile(root_ / profile_file(p.i, p.j), cfg_.embedding.lookback, cfg_.smooth_window).raw;
        }
        const auto rows = load_metrics_grid(root_);
        if (rows.size() != n) throw RuntimeError("metrics grid does not cover the grid");
        std::vector<double> targets(n);
        std::vector<std::size_t> ids(n);
        for (std::size_t id = 0; id < n; ++id) {
            targets[id] = rows[id].metrics.s_mom;
            ids[id] = id;
        }
        for (std::size_t T : horizons()) {
            const HorizonDataset ds = build_horizon_dataset(raw, targets, ids, T);
            std::vector<std::string> header{"point_id"};
            for (std::size_t c = 1; c <= T; ++c) header.push_back(fmt::format("x{}", c));
            header.push_back("target");
            CsvWriter csv(header);
            for (std::size_t r = 0; r < ds.features.rows(); ++r) {
                std::vector<std::string> fields{std::to_string(ds.point_ids[r])};
                for (double v : ds.features.row(r)) fields.push_back(format_real(v));
                fields.push_back(format_real(ds.targets[r]));
                csv.add_row(fields);
            }
            emit(dataset_file(T), csv.str(), "horizon dataset");
        }
        const SplitManifest random = random_split(n, cfg_.random_test_fraction, cfg_.split_seed);
        const SplitManifest center = center_split(cfg_.grid, cfg_.center_train_fraction);
        emit(split_file(SplitKind::random), to_json(random).dump(1) + "\n", "split manifest");
        emit(split_file(SplitKind::center), to_json(center).dump(1) + "\n", "split manifest");
    }

    struct TrainJob {
        SplitKind split;
        std::size_t model;   // index into cfg_.models
        std::size_t T;
    };

    std::vector<TrainJob> train_jobs() const {
        std::vector<TrainJob> jobs;
        for (SplitKind k : kAllSplits)
            for (std::size_t m = 0; m < cfg_.models.size(); ++m)
                for (std::size_t T : horizons()) jobs.push_back({k, m, T});
        return jobs;
    }

    void stage_train() {
        const auto hs = horizons();
        std::map<std::size_t, HorizonDataset> datasets;
        for (std::size_t T : hs) datasets.emplace(T, load_dataset(root_, T));
        std::map<SplitKind, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> rows;
        for (SplitKind k : kAllSplits) {
            const SplitManifest m = load_split(root_, k);
            const HorizonDataset& any = datasets.begin()->second;
            std::map<std::size_t, std::size_t> row_of;
            for (std::size_t r = 0; r < any.point_ids.size(); ++r) row_of[any.point_ids[r]] = r;
            auto to_rows = [&](const std::vector<std::size_t>& ids) {
                std::vector<std::size_t> out;
                for (std::size_t id : ids) {
                    const auto it = row_of.find(id);
                    if (it == row_of.end()) throw RuntimeError(fmt::format("split id {} missing from dataset", id));
                    out.push_back(it->second);
                }
                return out;
            };
            rows[k] = {to_rows(m.train_ids), to_rows(m.test_ids)};
        }

        const auto jobs = train_jobs();
        std::vector<TrainResult> results(jobs.size());
        parallel_for(jobs.size(), opts_.workers, [&](std::size_t k) {
            const TrainJob& job = jobs[k];
            ModelSpec spec = cfg_.models[job.model];
            spec.seed = derive_seed(spec.seed ^ cfg_.global_seed, static_cast<std::uint64_t>(job.split), job.T);
            const auto& [train_rows, test_rows] = rows.at(job.split);
            results[k] = train_and_evaluate(spec, job.split, datasets.at(job.T), train_rows, test_rows);
        });

        CsvWriter timing({"split", "family", "T", "fit_s", "test_s", "test_per_sample_s"});
        for (std::size_t k = 0; k < jobs.size(); ++k) {
            const TrainJob& job = jobs[k];
            const HorizonDataset& ds = datasets.at(job.T);
            const auto& test_rows = rows.at(job.split).second;
            const Family fam = cfg_.models[job.model].family;
            CsvWriter pred({"point_id", "y_true", "y_pred"});
            for (std::size_t q = 0; q < test_rows.size(); ++q) {
                pred.add_row({std::to_string(ds.point_ids[test_rows[q]]), format_real(ds.targets[test_rows[q]]),
                              format_real(results[k].predictions[q])});
            }
            emit(prediction_file(job.split, fam, job.T), pred.str(), "test-set predictions");
            const EvalRecord& r = results[k].record;
            timing.add_row({std::string(to_string(job.split)), std::string(to_string(fam)), std::to_string(job.T),
                            format_real(r.fit_seconds), format_real(r.test_seconds), format_real(r.test_per_sample_seconds)});
        }
        emit("train_timing.csv", timing.str(), "fit and predict wall-clock (non-deterministic)");
    }

    void stage_evaluate() {
        const CsvTable timing = read_csv(root_ / "train_timing.csv");
        std::map<std::tuple<std::string, std::string, std::size_t>, std::array<double, 3>> times;
        for (const auto& row : timing.rows) {
            times[{row[0], row[1], parse_count(row[2])}] = {parse_real(row[3]), parse_real(row[4]), parse_real(row[5])};
        }
        std::vector<EvalRecord> records;
        for (const TrainJob& job : train_jobs()) {
            const Family fam = cfg_.models[job.model].family;
            const CsvTable pred = read_csv(root_ / prediction_file(job.split, fam, job.T));
            std::vector<double> y_true;
            std::vector<double> y_pred;
            for (const auto& row : pred.rows) {
                y_true.push_back(parse_real(row[1]));
                y_pred.push_back(parse_real(row[2]));
            }
            const Scores sc = evaluate(y_true, y_pred);
            const auto it = times.find({std::string(to_string(job.split)), std::string(to_string(fam)), job.T});
            if (it == times.end()) throw RuntimeError("missing timing row for a training job");
            records.push_back(EvalRecord{job.split, fam, job.T, sc.mae, sc.rmse, sc.r2, it->second[0], it->second[1],
                                         it->second[2]});
        }
        CsvWriter csv({"split", "family", "T", "mae", "rmse", "r2", "fit_s", "test_s", "test_per_sample_s"});
        for (const auto& r : records) {
            csv.add_row({std::string(to_string(r.split)), std::string(to_string(r.family)), std::to_string(r.horizon),
                         format_real(r.mae), format_real(r.rmse), format_real(r.r2), format_real(r.fit_seconds),
                         format_real(r.test_seconds), format_real(r.test_per_sample_seconds)});
        }
        emit("eval_records.csv", csv.str(), "per (split, family, T) scores and timing");
        for (SplitKind k : kAllSplits) {
            const auto split_records = records_for_split(records, k);
            CsvWriter best({"T", "best_family", "r2", "fit_s", "test_s", "test_per_sample_s"});
            for (const BestRow& b : best_by_horizon(split_records)) {
                best.add_row({std::to_string(b.horizon), std::string(to_string(b.family)), format_real(b.r2),
                              format_real(b.fit_seconds), format_real(b.test_seconds), format_real(b.test_per_sample_seconds)});
            }
            emit(best_file(k), best.str(), "best family per horizon");
        }
    }

    std::size_t timing_T_min() const { return load_timing_summary(root_).at("T_min").get<std::size_t>(); }

    void stage_heatmap() {
        const auto rows = load_metrics_grid(root_);
        const std::size_t n = cfg_.grid.size();
        auto column = [&](auto get) {
            std::vector<double> v(n);
            for (std::size_t id = 0; id < n; ++id) v[id] = get(rows[id]);
            return v;
        };
        const auto s_mom = column([](const MetricsRow& r) { return r.metrics.s_mom; });
        const auto s_min = column([](const MetricsRow& r) { return r.metrics.s_min; });
        const auto t_min = column([](const MetricsRow& r) { return static_cast<double>(r.metrics.t_min); });
        const auto div = column([](const MetricsRow& r) { return r.diverged_fraction; });

        auto emit_map = [&](const std::string& name, const std::vector<double>& values,
                            std::optional<std::span<const std::size_t>> mask, const HeatmapStyle& style) {
            const auto files = emit_heatmap(cfg_.grid, values, mask, root_ / "heatmaps" / name, style);
            adopt(files.csv, "heatmap matrix");
            adopt(files.svg, "heatmap image");
            adopt(files.legend, "heatmap legend");
        };
        emit_map("s_mom", s_mom, std::nullopt, {"S_mom over (alpha, beta)", "S_mom", {}, {}});
        emit_map("s_min", s_min, std::nullopt, {"S_min over (alpha, beta)", "S_min", {}, {}});
        emit_map("t_min", t_min, std::nullopt, {"t_min over (alpha, beta)", "t_min", {}, {}});
        emit_map("diverged_fraction", div, std::nullopt, {"diverged run fraction", "fraction", 0.0, 1.0});

        // Predicted landscapes at the scanned horizon nearest T_min, with the
        // truth's color range and training points blank.
        const auto [lo, hi] = std::minmax_element(s_mom.begin(), s_mom.end());
        const std::size_t T_min = timing_T_min();
        const auto hs = horizons();
        std::size_t T_star = hs.front();
        for (std::size_t T : hs) {
            const auto dist = [&](std::size_t a) { return a > T_min ? a - T_min : T_min - a; };
            if (dist(T) < dist(T_star)) T_star = T;
        }
        const auto records = load_eval_records(root_);
        for (SplitKind k : kAllSplits) {
            const auto split_records = records_for_split(records, k);
            const auto best = best_by_horizon(split_records);
            const auto row = std::find_if(best.begin(), best.end(), [&](const BestRow& b) { return b.horizon == T_star; });
            if (row == best.end()) throw RuntimeError("no evaluation at the heatmap horizon");
            const SplitManifest split = load_split(root_, k);
            std::vector<double> values(n, std::numeric_limits<double>::quiet_NaN());
            const CsvTable pred = read_csv(root_ / prediction_file(k, row->family, T_star));
            for (const auto& r : pred.rows) values[parse_count(r[0])] = parse_real(r[2]);
            const std::string title =
                fmt::format("predicted S_mom, {} split, {} at T={}", to_string(k), to_string(row->family), T_star);
            emit_map(fmt::format("pred_{}_T{}", to_string(k), T_star), values, std::span<const std::size_t>(split.train_ids),
                     {title, "S_mom", *lo, *hi});
        }
    }

    void stage_curves() {
        const auto records = load_eval_records(root_);
        const std::size_t T_min = timing_T_min();
        for (SplitKind k : kAllSplits) {
            const auto split_records = records_for_split(records, k);
            const auto files = emit_curves(split_records, T_min, root_ / "curves" / std::string(to_string(k)),
                                           fmt::format("{} split", to_string(k)));
            for (const auto& f : files) {
                adopt(f.csv, "metric curve data");
                adopt(f.svg, "metric curve image");
            }
        }
    }

    void stage_cost() {
        const auto records = load_eval_records(root_);
        std::map<SplitKind, std::vector<BestRow>> best;
        for (SplitKind k : kAllSplits) best[k] = best_by_horizon(records_for_split(records, k));
        CsvWriter csv({"T", "k_req", "speedup", "best_family_random", "r2_random", "best_family_center", "r2_center"});
        for (std::size_t T : horizons()) {
            const CostEstimate c = required_iterations(T, cfg_.embedding.lookback, cfg_.embedding.h_max, cfg_.iterations);
            std::vector<std::string> fields{std::to_string(T), std::to_string(c.k_req), fmt::format("{:.1f}", c.speedup)};
            for (SplitKind k : kAllSplits) {
                const auto it = std::find_if(best[k].begin(), best[k].end(), [&](const BestRow& b) { return b.horizon == T; });
                if (it == best[k].end()) {
                    fields.insert(fields.end(), {"", ""});
                } else {
                    fields.push_back(std::string(to_string(it->family)));
                    fields.push_back(format_real(it->r2));
                }
            }
            csv.add_row(fields);
        }
        emit("cost_table.csv", csv.str(), "diagnostic cost versus predictive quality");
    }

    void stage_validate() {
        const auto problem = PolynomialProblem::roots_of_unity(cfg_.degree);
        ValidationOptions opts;
        opts.iterations = cfg_.validation.iterations;
        opts.tol = cfg_.validation.tol;
        opts.seed = cfg_.global_seed;
        const auto runs = run_validation_suite(problem, {cfg_.validation.alpha, cfg_.validation.beta},
                                               cfg_.validation.strategies, cfg_.stabilization, opts);
        CsvWriter errors({"strategy", "k", "E"});
        CsvWriter summary({"strategy", "iterations_to_tol", "observed_order", "diverged"});
        for (const auto& run : runs) {
            for (std::size_t k = 0; k < run.errors.size(); ++k)
                errors.add_row({std::string(to_string(run.strategy)), std::to_string(k), format_real(run.errors[k])});
            summary.add_row({std::string(to_string(run.strategy)),
                             run.iterations_to_tol ? std::to_string(*run.iterations_to_tol) : std::string(),
                             format_real(run.observed_order), run.diverged ? "1" : "0"});
        }
        emit("validation_errors.csv", errors.str(), "per-iteration maximum root error");
        emit("validation_summary.csv", summary.str(), "iterations to tolerance and observed order");
    }

    PipelineConfig cfg_;
    PipelineOptions opts_;
    fs::path root_;
    ArtifactManifest previous_;
    ArtifactManifest manifest_;
    std::map<std::string, StageRecord> carried_;
    std::vector<ManifestFile> current_;
    std::string current_stage_;
};

inline ArtifactManifest run_pipeline(const PipelineConfig& config, Stage target = Stage::all, PipelineOptions options = {}) {
    return Pipeline(config, std::move(options)).run(target);
}

} // namespace relscan
