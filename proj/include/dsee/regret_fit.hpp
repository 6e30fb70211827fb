#pragma once

// Log-log growth rate of cumulative regret.

#include "dsee/dsee.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace dsee {

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t points = 0;
};

/// Least-squares line through (log x, log y). Centered sums: tail windows
/// can span a log-x range many orders below log x itself.
inline std::optional<SlopeFit> fit_loglog(const std::vector<std::pair<double, double>>& xy) {
    std::vector<std::pair<double, double>> logs;
    logs.reserve(xy.size());
    for (auto [x, y] : xy)
        if (x > 0.0 && y > 0.0) logs.emplace_back(std::log(x), std::log(y));
    if (logs.size() < 2) return std::nullopt;
    const double nd = static_cast<double>(logs.size());
    double mx = 0, my = 0;
    for (auto [lx, ly] : logs) {
        mx += lx;
        my += ly;
    }
    mx /= nd;
    my /= nd;
    double sxx = 0, sxy = 0;
    for (auto [lx, ly] : logs) {
        sxx += (lx - mx) * (lx - mx);
        sxy += (lx - mx) * (ly - my);
    }
    if (!(sxx > 0.0)) return std::nullopt;
    const double slope = sxy / sxx;
    return SlopeFit{slope, my - slope * mx, logs.size()};
}

/// Tail slope of log R_T against log T over the final half of the
/// exploitation timesteps (all timesteps when the trace has none).
/// Rows with R_T = 0 carry no log and are skipped.
inline std::optional<SlopeFit> fit_tail_slope(const std::vector<TraceRow>& rows) {
    std::vector<const TraceRow*> pool;
    for (const auto& r : rows)
        if (r.phase == Phase::exploit) pool.push_back(&r);
    if (pool.empty())
        for (const auto& r : rows) pool.push_back(&r);
    std::vector<std::pair<double, double>> xy;
    xy.reserve(pool.size() - pool.size() / 2);
    for (std::size_t i = pool.size() / 2; i < pool.size(); ++i)
        xy.emplace_back(static_cast<double>(pool[i]->t), pool[i]->cumulative);
    return fit_loglog(xy);
}

/// Rows at geometrically spaced times (ratio `growth`) plus the last row;
/// a compact curve for plotting.
inline std::vector<TraceRow> geometric_subsample(const std::vector<TraceRow>& rows, double growth = 1.01) {
    std::vector<TraceRow> out;
    double next_t = 1.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const bool last = i + 1 == rows.size();
        if (static_cast<double>(rows[i].t) >= next_t || last) {
            out.push_back(rows[i]);
            next_t = std::max(next_t + 1.0, static_cast<double>(rows[i].t) * growth);
        }
    }
    return out;
}

} // namespace dsee
