#pragma once

// Solver-level validation: maximum per-root error under label-free pairing and
// empirical convergence order.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "relscan/error.hpp"
#include "relscan/random.hpp"
#include "relscan/solver.hpp"

namespace relscan {

/// Pairs iterates to distinct roots greedily (globally closest pair first) and
/// returns the largest paired distance.
inline double max_root_error(std::span<const Complex> z, std::span<const Complex> roots) {
    if (z.size() != roots.size()) throw ConfigError("iterate and root counts differ");
    const std::size_t n = z.size();
    std::vector<bool> z_used(n, false);
    std::vector<bool> r_used(n, false);
    double worst = 0.0;
    for (std::size_t step = 0; step < n; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0;
        std::size_t bj = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (z_used[i]) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (r_used[j]) continue;
                const double d = std::abs(z[i] - roots[j]);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (!std::isfinite(best)) return std::numeric_limits<double>::infinity();
        z_used[bi] = true;
        r_used[bj] = true;
        worst = std::max(worst, best);
    }
    return worst;
}

/// Mean of p_k = log(E_{k+1}/E_k) / log(E_k/E_{k-1}) over consecutive triples.
/// Triples touching a value at or below `floor` are skipped.
inline double empirical_order(std::span<const double> errors, double floor = 0.0) {
    if (errors.size() < 3) throw ConfigError("need at least three error values");
    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (!(errors[k] > 0.0) || !std::isfinite(errors[k])) throw ConfigError("errors must be positive and finite");
        if (k > 0 && !(errors[k] < errors[k - 1])) throw ConfigError("errors must be strictly decreasing");
    }
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 1; k + 1 < errors.size(); ++k) {
        if (errors[k - 1] <= floor || errors[k] <= floor || errors[k + 1] <= floor) continue;
        const double num = std::log(errors[k + 1] / errors[k]);
        const double den = std::log(errors[k] / errors[k - 1]);
        if (!std::isfinite(num) || !std::isfinite(den) || den == 0.0) continue;
        sum += num / den;
        ++used;
    }
    if (used == 0) throw ConfigError("fewer than three usable error values");
    return sum / static_cast<double>(used);
}

/// Leading run of strictly decreasing values above `floor`.
inline std::vector<double> decreasing_prefix(std::span<const double> errors, double floor) {
    std::vector<double> out;
    for (double e : errors) {
        if (!(e > floor) || !std::isfinite(e)) break;
        if (!out.empty() && !(e < out.back())) break;
        out.push_back(e);
    }
    return out;
}

struct ValidationRun {
    InitStrategy strategy = InitStrategy::near_root;
    std::vector<double> errors;                  // E^(k), k = 0..K
    std::optional<std::size_t> iterations_to_tol;
    double observed_order = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
};

struct ValidationOptions {
    std::size_t iterations = 20;
    double tol = 1e-10;
    /// Errors at or below this are treated as converged to machine resolution.
    double order_floor = 1e-13;
    std::uint64_t seed = 0;
    InitOptions init;
};

template <IterationMap Map = WeierstrassFamily>
ValidationRun run_validation(const PolynomialProblem& problem, const IterationParams& params, InitStrategy strategy,
                             const StabilizationConfig& stab, const ValidationOptions& opts, const Map& map = {}) {
    SplitMix64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(strategy)));
    std::vector<Complex> z = sample_initialization(strategy, problem, rng, opts.init);
    ValidationRun run;
    run.strategy = strategy;
    run.errors.push_back(max_root_error(z, problem.roots()));
    for (std::size_t k = 0; k < opts.iterations; ++k) {
        if (run.errors.back() == 0.0) break;
        StepResult res = map.step(z, params, problem, stab, run.diverged);
        run.diverged = run.diverged || res.flags.diverged;
        z = std::move(res.z_next);
        run.errors.push_back(max_root_error(z, problem.roots()));
    }
    for (std::size_t k = 0; k < run.errors.size(); ++k) {
        if (run.errors[k] < opts.tol) {
            run.iterations_to_tol = k;
            break;
        }
    }
    if (run.diverged) run.iterations_to_tol.reset();
    // The order is measured in the asymptotic regime: from the first error
    // below 0.1 onward.
    std::size_t first = 0;
    while (first < run.errors.size() && !(run.errors[first] < 0.1)) ++first;
    if (first < run.errors.size()) {
        const auto tail = decreasing_prefix(std::span<const double>(run.errors).subspan(first), opts.order_floor);
        if (tail.size() >= 3) {
            try {
                run.observed_order = empirical_order(tail, opts.order_floor);
            } catch (const ConfigError&) {
            }
        }
    }
    return run;
}

template <IterationMap Map = WeierstrassFamily>
std::vector<ValidationRun> run_validation_suite(const PolynomialProblem& problem, const IterationParams& params,
                                                std::span<const InitStrategy> strategies,
                                                const StabilizationConfig& stab, const ValidationOptions& opts,
                                                const Map& map = {}) {
    if (strategies.empty()) throw ConfigError("at least one initialization strategy is required");
    std::vector<ValidationRun> out;
    for (InitStrategy s : strategies) out.push_back(run_validation(problem, params, s, stab, opts, map));
    return out;
}

} // namespace relscan
