// relscan: command-line driver for the reliability-scan pipeline.
//
//   relscan [stage] [--config FILE] [--stage NAME] [--seed N] [--out DIR]
//           [--workers N] [--desk] [--print-config]
//
// Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime error.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "relscan/config.hpp"
#include "relscan/io.hpp"
#include "relscan/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr const char* kOutputEnv = "RELSCAN_OUT";

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reliability scan of a two-parameter simultaneous root finder"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    std::string config_path;
    std::string stage_name;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::size_t workers = 0;
    bool desk = false;
    bool print_config = false;
    bool quiet = false;

    app.add_option("--config", config_path, "JSON configuration file (keys override defaults)")->check(CLI::ExistingFile);
    app.add_option("--stage", stage_name, "stage to run: profile, metrics, dataset, train, evaluate, heatmap, curves, cost, validate, all");
    app.add_option("--seed", seed, "global seed (overrides the config)");
    app.add_option("--out", out_dir, fmt::format("output directory (default: ${} or the config value)", kOutputEnv));
    app.add_option("--workers", workers, "worker threads (0 = one per hardware thread)");
    app.add_flag("--desk", desk, "apply the desk-scale preset (20x20 grid, 64 runs, K = 120) before the config file");
    app.add_flag("--print-config", print_config, "print the resolved configuration and exit");
    app.add_flag("-q,--quiet", quiet, "suppress progress messages");

    for (relscan::Stage s : relscan::kAllStages) {
        app.add_subcommand(std::string(relscan::to_string(s)), fmt::format("run the {} stage (and anything it needs)", relscan::to_string(s)));
    }
    app.add_subcommand("all", "run every stage");

    CLI11_PARSE(app, argc, argv);

    try {
        relscan::PipelineConfig cfg = desk ? relscan::PipelineConfig::desk() : relscan::PipelineConfig{};
        if (const char* env = std::getenv(kOutputEnv); env != nullptr && *env != '\0') cfg.output_dir = env;
        if (!config_path.empty()) cfg = relscan::config_from_string(relscan::read_file(config_path), cfg);
        if (seed) cfg.global_seed = *seed;
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        cfg.validate();

        if (print_config) {
            std::cout << relscan::config_to_string(cfg);
            return 0;
        }

        relscan::Stage stage = relscan::Stage::all;
        const auto subs = app.get_subcommands();
        if (!subs.empty() && !stage_name.empty() && subs.front()->get_name() != stage_name) {
            throw relscan::ConfigError("conflicting stage selections: " + subs.front()->get_name() + " and " + stage_name);
        }
        if (!subs.empty()) stage = relscan::parse_stage(subs.front()->get_name());
        else if (!stage_name.empty()) stage = relscan::parse_stage(stage_name);

        relscan::PipelineOptions opts;
        opts.workers = workers;
        if (!quiet) opts.log = [](std::string_view msg) { fmt::print(stderr, "{}\n", msg); };
        const auto manifest = relscan::run_pipeline(cfg, stage, opts);
        if (!quiet) {
            fmt::print(stderr, "wrote {} files under {}\n", manifest.files().size(), cfg.output_dir);
        }
        return 0;
    } catch (const relscan::ConfigError& e) {
        fmt::print(stderr, "configuration error: {}\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        fmt::print(stderr, "runtime error: {}\n", e.what());
        return kExitRuntime;
    }
}
