#pragma once

// Vector-image emission: grid heatmaps with optional training masks and
// per-metric horizon curves. Every image is paired with a CSV of the plotted
// numbers so figures can be regenerated with any other tool.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "relscan/error.hpp"
#include "relscan/io.hpp"
#include "relscan/regression.hpp"
#include "relscan/solver.hpp"

namespace relscan {

struct Rgb {
    double r = 0.0;
    double g = 0.0;
    double b = 0.0;
};

/// Piecewise-linear viridis approximation, u clamped to [0, 1].
inline std::string viridis_hex(double u) {
    static constexpr std::array<Rgb, 5> stops{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    if (!std::isfinite(u)) u = 0.0;
    u = std::clamp(u, 0.0, 1.0) * static_cast<double>(stops.size() - 1);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(u), stops.size() - 2);
    const double f = u - static_cast<double>(k);
    const Rgb& a = stops[k];
    const Rgb& b = stops[k + 1];
    auto mix = [f](double x, double y) { return static_cast<int>(std::lround(x + (y - x) * f)); };
    return fmt::format("#{:02x}{:02x}{:02x}", mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b));
}

inline constexpr const char* kMaskedFill = "#ffffff";
inline constexpr const char* kMissingFill = "#bdbdbd";

struct HeatmapStyle {
    std::string title;
    std::string label;
    /// Fixed color range; defaults to the min/max of the unmasked finite values.
    std::optional<double> vmin;
    std::optional<double> vmax;
};

struct HeatmapFiles {
    fs::path csv;
    fs::path svg;
    fs::path legend;
};

/// Writes <base>.csv (rows i / alpha, columns j / beta, masked cells empty),
/// <base>.svg and <base>.legend.json.
inline HeatmapFiles emit_heatmap(const ParamGrid& grid, std::span<const double> values,
                                 std::optional<std::span<const std::size_t>> mask, const fs::path& base,
                                 const HeatmapStyle& style = {}) {
    if (values.size() != grid.size()) throw ConfigError("heatmap values do not cover the grid");
    std::vector<bool> masked(grid.size(), false);
    if (mask) {
        for (std::size_t id : *mask) {
            if (id >= grid.size()) throw ConfigError(fmt::format("mask id {} lies outside the grid", id));
            masked[id] = true;
        }
    }

    double lo = INFINITY;
    double hi = -INFINITY;
    for (std::size_t id = 0; id < values.size(); ++id) {
        if (masked[id] || !std::isfinite(values[id])) continue;
        lo = std::min(lo, values[id]);
        hi = std::max(hi, values[id]);
    }
    if (style.vmin) lo = *style.vmin;
    if (style.vmax) hi = *style.vmax;
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        lo = 0.0;
        hi = 1.0;
    }
    const double span = hi > lo ? hi - lo : 1.0;

    // CSV matrix.
    std::string csv = "alpha\\beta";
    for (std::size_t j = 0; j < grid.n_beta; ++j) csv += "," + format_real(ParamGrid::linspace(grid.beta_min, grid.beta_max, grid.n_beta, j));
    csv += '\n';
    for (std::size_t i = 0; i < grid.n_alpha; ++i) {
        csv += format_real(ParamGrid::linspace(grid.alpha_min, grid.alpha_max, grid.n_alpha, i));
        for (std::size_t j = 0; j < grid.n_beta; ++j) {
            csv += ',';
            const std::size_t id = grid.id(i, j);
            if (!masked[id]) csv += format_real(values[id]);
        }
        csv += '\n';
    }

    // SVG: alpha on x, beta on y (increasing upward).
    constexpr double cell = 12.0;
    constexpr double left = 70.0;
    constexpr double top = 40.0;
    const double plot_w = cell * static_cast<double>(grid.n_alpha);
    const double plot_h = cell * static_cast<double>(grid.n_beta);
    const double bar_x = left + plot_w + 20.0;
    const double width = bar_x + 90.0;
    const double height = top + plot_h + 60.0;

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\" "
        "font-family=\"sans-serif\" font-size=\"11\">\n",
        width, height, width, height);
    svg += fmt::format("<rect x=\"0\" y=\"0\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"#ffffff\"/>\n", width, height);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", left + plot_w / 2,
                       style.title);
    for (std::size_t i = 0; i < grid.n_alpha; ++i) {
        for (std::size_t j = 0; j < grid.n_beta; ++j) {
            const std::size_t id = grid.id(i, j);
            std::string fill;
            if (masked[id]) fill = kMaskedFill;
            else if (!std::isfinite(values[id])) fill = kMissingFill;
            else fill = viridis_hex((values[id] - lo) / span);
            svg += fmt::format("<rect class=\"cell\" data-id=\"{}\" x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n",
                               id, left + cell * static_cast<double>(i),
                               top + cell * static_cast<double>(grid.n_beta - 1 - j), cell, cell, fill);
        }
    }
    svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"#000000\"/>\n",
                       left, top, plot_w, plot_h);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"start\">{}</text>\n", left, top + plot_h + 16,
                       format_real(grid.alpha_min));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", left + plot_w, top + plot_h + 16,
                       format_real(grid.alpha_max));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">alpha</text>\n", left + plot_w / 2,
                       top + plot_h + 34);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", left - 6, top + plot_h,
                       format_real(grid.beta_min));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", left - 6, top + 10,
                       format_real(grid.beta_max));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 {:.1f} {:.1f})\">beta</text>\n",
                       left - 40, top + plot_h / 2, left - 40, top + plot_h / 2);

    // Color bar.
    svg += "<defs><linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">";
    for (int s = 0; s <= 10; ++s) {
        svg += fmt::format("<stop offset=\"{:.1f}\" stop-color=\"{}\"/>", s / 10.0, viridis_hex(s / 10.0));
    }
    svg += "</linearGradient></defs>\n";
    svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"14\" height=\"{:.1f}\" fill=\"url(#scale)\" stroke=\"#000000\"/>\n",
                       bar_x, top, plot_h);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{:.4g}</text>\n", bar_x + 18, top + 10, hi);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{:.4g}</text>\n", bar_x + 18, top + plot_h, lo);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", bar_x, top - 8, style.label);
    svg += "</svg>\n";

    std::size_t masked_count = static_cast<std::size_t>(std::count(masked.begin(), masked.end(), true));
    const nlohmann::json legend{
        {"title", style.title},
        {"label", style.label},
        {"colormap", "viridis (5-stop piecewise linear)"},
        {"vmin", lo},
        {"vmax", hi},
        {"masked_fill", kMaskedFill},
        {"missing_fill", kMissingFill},
        {"masked_cells", masked_count},
        {"x_axis", {{"name", "alpha"}, {"min", grid.alpha_min}, {"max", grid.alpha_max}, {"cells", grid.n_alpha}}},
        {"y_axis", {{"name", "beta"}, {"min", grid.beta_min}, {"max", grid.beta_max}, {"cells", grid.n_beta}}},
    };

    HeatmapFiles out{base, base, base};
    out.csv += ".csv";
    out.svg += ".svg";
    out.legend += ".legend.json";
    write_file(out.csv, csv);
    write_file(out.svg, svg);
    write_file(out.legend, legend.dump(2) + "\n");
    return out;
}

// ---------------------------------------------------------------------------
// Horizon curves

inline constexpr double kR2PlotFloor = -0.1;

inline std::string family_color(Family f) {
    switch (f) {
    case Family::knn: return "#1f77b4";
    case Family::ridge: return "#ff7f0e";
    case Family::elastic_net: return "#2ca02c";
    case Family::random_forest: return "#d62728";
    case Family::grad_boost: return "#9467bd";
    }
    return "#000000";
}

inline double metric_value(const EvalRecord& r, std::string_view metric) {
    if (metric == "mae") return r.mae;
    if (metric == "rmse") return r.rmse;
    if (metric == "r2") return r.r2;
    throw ConfigError("unknown metric: " + std::string(metric));
}

struct CurveFiles {
    std::string metric;
    fs::path csv;
    fs::path svg;
    /// Horizons kept after truncation at 3 * T_min.
    std::vector<std::size_t> plotted_horizons;
};

/// For each of mae, rmse and r2 writes <base>_<metric>.csv (family, T, value;
/// raw values) and <base>_<metric>.svg with one polyline per family over
/// T <= 3 * t_min_marker and dashed markers at T_min and 3 * T_min.
inline std::vector<CurveFiles> emit_curves(std::span<const EvalRecord> records, std::size_t t_min_marker,
                                           const fs::path& base, const std::string& title = {}) {
    if (records.empty()) throw ConfigError("emit_curves needs at least one record");
    if (t_min_marker < 1) throw ConfigError("T_min marker must be >= 1");
    const std::size_t t_cap = 3 * t_min_marker;

    std::map<int, std::vector<const EvalRecord*>> by_family;
    std::vector<std::size_t> horizons;
    for (const auto& r : records) {
        if (r.horizon > t_cap) continue;
        by_family[static_cast<int>(r.family)].push_back(&r);
        horizons.push_back(r.horizon);
    }
    std::sort(horizons.begin(), horizons.end());
    horizons.erase(std::unique(horizons.begin(), horizons.end()), horizons.end());
    for (auto& [f, rs] : by_family) {
        std::sort(rs.begin(), rs.end(), [](const EvalRecord* a, const EvalRecord* b) { return a->horizon < b->horizon; });
    }

    std::vector<CurveFiles> out;
    for (const char* metric : {"mae", "rmse", "r2"}) {
        CurveFiles files;
        files.metric = metric;
        files.csv = base;
        files.csv += fmt::format("_{}.csv", metric);
        files.svg = base;
        files.svg += fmt::format("_{}.svg", metric);
        files.plotted_horizons = horizons;

        CsvWriter csv({"family", "T", metric});
        double y_lo = INFINITY;
        double y_hi = -INFINITY;
        auto shown = [&](double v) {
            if (std::string_view(metric) == "r2") return std::isnan(v) ? kR2PlotFloor : std::max(v, kR2PlotFloor);
            return v;
        };
        for (const auto& [f, rs] : by_family) {
            for (const EvalRecord* r : rs) {
                const double v = metric_value(*r, metric);
                csv.add_row({std::string(to_string(r->family)), std::to_string(r->horizon), format_real(v)});
                const double s = shown(v);
                if (std::isfinite(s)) {
                    y_lo = std::min(y_lo, s);
                    y_hi = std::max(y_hi, s);
                }
            }
        }
        if (!std::isfinite(y_lo)) {
            y_lo = 0.0;
            y_hi = 1.0;
        }
        if (y_hi - y_lo < 1e-12) {
            y_lo -= 0.5;
            y_hi += 0.5;
        }
        const double pad = 0.05 * (y_hi - y_lo);
        y_lo -= pad;
        y_hi += pad;

        constexpr double left = 70.0;
        constexpr double top = 40.0;
        constexpr double plot_w = 480.0;
        constexpr double plot_h = 300.0;
        const double x_lo = 1.0;
        const double x_hi = std::max<double>(static_cast<double>(t_cap), 2.0);
        auto px = [&](double t) { return left + (t - x_lo) / (x_hi - x_lo) * plot_w; };
        auto py = [&](double v) {
            const double clamped = std::clamp(v, y_lo, y_hi);
            return top + (1.0 - (clamped - y_lo) / (y_hi - y_lo)) * plot_h;
        };

        std::string svg = fmt::format(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"700\" height=\"400\" viewBox=\"0 0 700 400\" "
            "font-family=\"sans-serif\" font-size=\"11\">\n<rect x=\"0\" y=\"0\" width=\"700\" height=\"400\" fill=\"#ffffff\"/>\n");
        svg += fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}{}{}</text>\n",
                           left + plot_w / 2, title, title.empty() ? "" : " - ", metric);
        svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"#000000\"/>\n",
                           left, top, plot_w, plot_h);
        for (std::size_t mark : {t_min_marker, t_cap}) {
            const double x = px(static_cast<double>(mark));
            svg += fmt::format("<line class=\"marker\" data-T=\"{}\" x1=\"{:.2f}\" y1=\"{:.1f}\" x2=\"{:.2f}\" y2=\"{:.1f}\" "
                               "stroke=\"#555555\" stroke-dasharray=\"5,4\"/>\n",
                               mark, x, top, x, top + plot_h);
        }
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">horizon T</text>\n", left + plot_w / 2,
                           top + plot_h + 34);
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", px(x_lo), top + plot_h + 16,
                           x_lo);
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", px(x_hi), top + plot_h + 16,
                           x_hi);
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", left - 6, top + 10, y_hi);
        svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", left - 6, top + plot_h, y_lo);

        double legend_y = top + 10;
        for (const auto& [f, rs] : by_family) {
            const auto fam = static_cast<Family>(f);
            const std::string color = family_color(fam);
            std::string points;
            for (const EvalRecord* r : rs) {
                const double x = px(static_cast<double>(r->horizon));
                const double y = py(shown(metric_value(*r, metric)));
                points += fmt::format("{:.2f},{:.2f} ", x, y);
            }
            if (!points.empty()) points.pop_back();
            svg += fmt::format("<polyline class=\"curve\" data-family=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                               to_string(fam), color, points);
            for (const EvalRecord* r : rs) {
                svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\"/>\n",
                                   px(static_cast<double>(r->horizon)), py(shown(metric_value(*r, metric))), color);
            }
            svg += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"2\"/>"
                               "<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n",
                               left + plot_w + 12, legend_y - 4, left + plot_w + 30, legend_y - 4, color,
                               left + plot_w + 34, legend_y, to_string(fam));
            legend_y += 16;
        }
        svg += "</svg>\n";

        write_file(files.csv, csv.str());
        write_file(files.svg, svg);
        out.push_back(std::move(files));
    }
    return out;
}

} // namespace relscan
