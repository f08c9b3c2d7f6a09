#pragma once

// Two-parameter simultaneous root-finding iteration, trajectory recording with
// tail-floor freezing and divergence stabilization, and seeded ensembles.

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relscan/error.hpp"
#include "relscan/random.hpp"

namespace relscan {

using Complex = std::complex<double>;

/// Monic polynomial with known roots. Roots are only used for validation.
class PolynomialProblem {
public:
    explicit PolynomialProblem(std::vector<Complex> roots) : roots_(std::move(roots)) {
        if (roots_.empty()) throw ConfigError("polynomial degree must be >= 1");
        // coefficients_[k] multiplies z^k; leading coefficient is 1.
        coefficients_.assign(1, Complex{1.0, 0.0});
        for (const Complex& r : roots_) {
            std::vector<Complex> next(coefficients_.size() + 1, Complex{});
            for (std::size_t k = 0; k < coefficients_.size(); ++k) {
                next[k + 1] += coefficients_[k];
                next[k] -= r * coefficients_[k];
            }
            coefficients_ = std::move(next);
        }
    }

    /// z^n - 1.
    static PolynomialProblem roots_of_unity(int degree) {
        if (degree < 1) throw ConfigError("polynomial degree must be >= 1");
        std::vector<Complex> roots;
        roots.reserve(static_cast<std::size_t>(degree));
        for (int k = 0; k < degree; ++k) {
            roots.push_back(std::polar(1.0, 2.0 * std::numbers::pi * k / degree));
        }
        return PolynomialProblem(std::move(roots));
    }

    std::size_t degree() const noexcept { return roots_.size(); }
    std::span<const Complex> roots() const noexcept { return roots_; }
    std::span<const Complex> coefficients() const noexcept { return coefficients_; }

    Complex evaluate(Complex z) const noexcept {
        Complex acc{};
        for (auto it = coefficients_.rbegin(); it != coefficients_.rend(); ++it) acc = acc * z + *it;
        return acc;
    }

private:
    std::vector<Complex> roots_;
    std::vector<Complex> coefficients_;
};

struct IterationParams {
    double alpha = 0.0;
    double beta = 0.0;
};

struct StabilizationConfig {
    double tail_floor_log = std::log(1e-14);
    double divergence_bound = 1e8;
    double step_cap = 1e4;
    double guard_eps = 1e-12;

    void validate() const {
        if (!(tail_floor_log < 0.0)) throw ConfigError("tail_floor_log must be negative");
        if (!(step_cap > 0.0 && divergence_bound > step_cap)) {
            throw ConfigError("require divergence_bound > step_cap > 0");
        }
        if (!(guard_eps > 0.0)) throw ConfigError("guard_eps must be positive");
    }
};

struct StepFlags {
    bool diverged = false;    // stabilization engaged on this step
    bool fallback = false;    // at least one guarded denominator
    bool perturbed = false;   // coincident iterates were separated
};

struct StepResult {
    std::vector<Complex> z_next;
    StepFlags flags;
};

/// Any map z -> z_next usable by the trajectory runner. `stabilized` requests
/// step capping even when the current iterate is in bounds.
template <class M>
concept IterationMap = requires(const M& map, std::span<const Complex> z, const IterationParams& params,
                                const PolynomialProblem& problem, const StabilizationConfig& stab) {
    { map.step(z, params, problem, stab, bool{}) } -> std::same_as<StepResult>;
};

namespace detail {

// Clamps the stacked step (z_next - z) to norm <= cap. Non-finite components
// are replaced by a radial push of size cap.
inline void clamp_step(std::span<const Complex> z, std::vector<Complex>& z_next, double cap) {
    std::vector<Complex> delta(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        Complex d = z_next[i] - z[i];
        if (!std::isfinite(d.real()) || !std::isfinite(d.imag())) {
            const double r = std::abs(z[i]);
            d = (r > 0.0 && std::isfinite(r)) ? z[i] / r * cap : Complex{cap, 0.0};
        }
        delta[i] = d;
    }
    double norm2 = 0.0;
    for (const Complex& d : delta) norm2 += std::norm(d);
    const double norm = std::sqrt(norm2);
    const double scale = (norm > cap) ? cap / norm : 1.0;
    for (std::size_t i = 0; i < z.size(); ++i) z_next[i] = z[i] + delta[i] * scale;
}

} // namespace detail

/// Default family: z_i <- z_i - W_i (1 + beta W_i) / (1 + alpha W_i) with the
/// Weierstrass correction W_i. At (0, 0) this is the Durand-Kerner step.
struct WeierstrassFamily {
    StepResult step(std::span<const Complex> z_in, const IterationParams& params, const PolynomialProblem& problem,
                    const StabilizationConfig& stab, bool stabilized = false) const {
        const std::size_t n = z_in.size();
        if (n != problem.degree()) throw ConfigError("iterate count must equal polynomial degree");

        StepResult out;
        std::vector<Complex> z(z_in.begin(), z_in.end());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (std::abs(z[i] - z[j]) < stab.guard_eps) {
                    z[i] += Complex{stab.guard_eps, 0.0};
                    out.flags.perturbed = true;
                }
            }
        }

        out.z_next.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            Complex denom{1.0, 0.0};
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) denom *= z[i] - z[j];
            }
            const Complex w = problem.evaluate(z[i]) / denom;
            const Complex guard = 1.0 + params.alpha * w;
            if (std::abs(guard) < stab.guard_eps) {
                out.z_next[i] = z[i] - w;
                out.flags.fallback = true;
            } else {
                out.z_next[i] = z[i] - w * (1.0 + params.beta * w) / guard;
            }
        }

        bool explode = stabilized;
        for (const Complex& v : out.z_next) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()) || std::abs(v) > stab.divergence_bound) {
                explode = true;
                break;
            }
        }
        if (explode) {
            detail::clamp_step(z, out.z_next, stab.step_cap);
            out.flags.diverged = true;
        }
        return out;
    }
};

static_assert(IterationMap<WeierstrassFamily>);

/// Per-iteration step norms of one run.
struct Trajectory {
    std::vector<double> step_norms;
    bool diverged = false;
    std::optional<std::size_t> frozen_from;
    /// First iteration at which stabilization engaged.
    std::optional<std::size_t> diverged_from;
};

/// Runs K iterations, recording ||z_{k+1} - z_k|| (Euclidean over the stacked
/// vector). Once log(step) reaches the tail floor the rest of the record is
/// frozen at exp(tail_floor_log). After the first stabilized step every later
/// step stays capped.
template <IterationMap Map = WeierstrassFamily>
Trajectory run_trajectory(std::span<const Complex> init, const IterationParams& params, const PolynomialProblem& problem,
                          std::size_t iterations, const StabilizationConfig& stab, const Map& map = {}) {
    if (iterations < 1) throw ConfigError("iteration count K must be >= 1");
    Trajectory traj;
    traj.step_norms.reserve(iterations);
    const double floor_value = std::exp(stab.tail_floor_log);

    std::vector<Complex> z(init.begin(), init.end());
    for (std::size_t k = 0; k < iterations; ++k) {
        StepResult res = map.step(z, params, problem, stab, traj.diverged);
        if (res.flags.diverged && !traj.diverged) {
            traj.diverged = true;
            traj.diverged_from = k;
        }
        double norm2 = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) norm2 += std::norm(res.z_next[i] - z[i]);
        double norm = std::sqrt(norm2);
        if (!std::isfinite(norm)) {
            norm = stab.step_cap;
            if (!traj.diverged) traj.diverged_from = k;
            traj.diverged = true;
        }
        if (norm <= 0.0 || std::log(norm) <= stab.tail_floor_log) {
            traj.frozen_from = k;
            traj.step_norms.resize(iterations, floor_value);
            return traj;
        }
        traj.step_norms.push_back(norm);
        z = std::move(res.z_next);
    }
    return traj;
}

enum class InitStrategy { near_root, moderate, random_box };

inline InitStrategy parse_init_strategy(std::string_view name) {
    if (name == "near_root") return InitStrategy::near_root;
    if (name == "moderate") return InitStrategy::moderate;
    if (name == "random_box") return InitStrategy::random_box;
    throw ConfigError("unknown initialization strategy: " + std::string(name));
}

inline std::string_view to_string(InitStrategy s) {
    switch (s) {
    case InitStrategy::near_root: return "near_root";
    case InitStrategy::moderate: return "moderate";
    case InitStrategy::random_box: return "random_box";
    }
    return "unknown";
}

struct InitOptions {
    double near_root_scale = 1e-2;
    double moderate_radius = 5.0;
    double box_half_width = 10.0;
};

template <class Rng>
std::vector<Complex> sample_initialization(InitStrategy strategy, const PolynomialProblem& problem, Rng& rng,
                                           const InitOptions& opts = {}) {
    const std::size_t n = problem.degree();
    std::vector<Complex> z(n);
    switch (strategy) {
    case InitStrategy::near_root:
        for (std::size_t k = 0; k < n; ++k) {
            const double re = uniform(rng, -1.0, 1.0);
            const double im = uniform(rng, -1.0, 1.0);
            z[k] = problem.roots()[k] + opts.near_root_scale * Complex{re, im};
        }
        break;
    case InitStrategy::moderate:
        for (std::size_t k = 0; k < n; ++k) {
            z[k] = std::polar(opts.moderate_radius, 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
        }
        break;
    case InitStrategy::random_box:
        for (std::size_t k = 0; k < n; ++k) {
            const double re = uniform(rng, -opts.box_half_width, opts.box_half_width);
            const double im = uniform(rng, -opts.box_half_width, opts.box_half_width);
            z[k] = Complex{re, im};
        }
        break;
    }
    return z;
}

/// One cell of the (alpha, beta) sweep.
struct GridPoint {
    std::size_t i = 0;
    std::size_t j = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
};

struct ParamGrid {
    double alpha_min = -3.0;
    double alpha_max = 5.0;
    double beta_min = -2.0;
    double beta_max = 4.0;
    std::size_t n_alpha = 60;
    std::size_t n_beta = 60;

    void validate() const {
        if (n_alpha < 1 || n_beta < 1) throw ConfigError("grid must have at least one point per axis");
        if (!(alpha_max >= alpha_min) || !(beta_max >= beta_min)) throw ConfigError("grid ranges must be ordered");
    }

    std::size_t size() const noexcept { return n_alpha * n_beta; }
    std::size_t id(std::size_t i, std::size_t j) const noexcept { return i * n_beta + j; }

    static double linspace(double lo, double hi, std::size_t n, std::size_t k) noexcept {
        if (n == 1) return 0.5 * (lo + hi);
        return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    }

    GridPoint point(std::size_t i, std::size_t j, std::uint64_t global_seed) const noexcept {
        return GridPoint{i, j, linspace(alpha_min, alpha_max, n_alpha, i), linspace(beta_min, beta_max, n_beta, j),
                         derive_seed(global_seed, i, j)};
    }

    GridPoint point(std::size_t id, std::uint64_t global_seed) const noexcept {
        return point(id / n_beta, id % n_beta, global_seed);
    }

    /// All points in row-major (i, j) order.
    std::vector<GridPoint> points(std::uint64_t global_seed) const {
        std::vector<GridPoint> out;
        out.reserve(size());
        for (std::size_t i = 0; i < n_alpha; ++i)
            for (std::size_t j = 0; j < n_beta; ++j) out.push_back(point(i, j, global_seed));
        return out;
    }
};

inline std::uint64_t run_seed(const GridPoint& point, std::size_t run) noexcept { return derive_seed(point.seed, run); }

template <IterationMap Map = WeierstrassFamily>
std::vector<Trajectory> run_ensemble(const GridPoint& point, const PolynomialProblem& problem, std::size_t n_runs,
                                     std::size_t iterations, const StabilizationConfig& stab, InitStrategy strategy,
                                     const Map& map = {}) {
    if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
    const IterationParams params{point.alpha, point.beta};
    std::vector<Trajectory> out;
    out.reserve(n_runs);
    for (std::size_t r = 0; r < n_runs; ++r) {
        SplitMix64 rng(run_seed(point, r));
        const auto init = sample_initialization(strategy, problem, rng);
        out.push_back(run_trajectory(init, params, problem, iterations, stab, map));
    }
    return out;
}

} // namespace relscan
