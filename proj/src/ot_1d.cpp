#include <algorithm>
#include <cmath>

#include "endoshift/error.hpp"
#include "endoshift/ot.hpp"

namespace endoshift {

namespace {

void require_compatible(const Histogram1D& src, const Histogram1D& dst)
{
    if (src.edges.size() != dst.edges.size() || src.bins() + 1 != src.edges.size() || src.bins() == 0)
        throw ValidationError("incompatible histograms");
    for (std::size_t i = 0; i < src.edges.size(); ++i)
        if (std::abs(src.edges[i] - dst.edges[i]) > 1e-12)
            throw ValidationError("incompatible histograms");
}

std::vector<double> cumulative(const std::vector<double>& mass)
{
    std::vector<double> cum(mass.size() + 1, 0.0);
    for (std::size_t i = 0; i < mass.size(); ++i)
        cum[i + 1] = cum[i] + mass[i];
    return cum;
}

// Generalised inverse of the piecewise-linear CDF: smallest x with F(x) >= p.
double quantile(const Histogram1D& h, const std::vector<double>& cum, double p)
{
    const auto first = cum.begin() + 1;
    auto it = std::lower_bound(first, cum.end(), p);
    if (it == cum.end()) {
        // p overshoots the total by round-off: right edge of the last occupied bin
        for (std::size_t j = h.bins(); j-- > 0;)
            if (h.mass[j] > 0.0)
                return h.edges[j + 1];
        return h.edges.back();
    }
    const auto j = static_cast<std::size_t>(it - first);
    const double frac = std::clamp((p - cum[j]) / h.mass[j], 0.0, 1.0);
    return h.edges[j] + frac * h.width(j);
}

} // namespace

double ColorMapping1D::operator()(double v) const
{
    const std::size_t n = src_values.size();
    double out;
    if (v <= src_values.front()) {
        out = v + (dst_values.front() - src_values.front());
    } else if (v >= src_values.back()) {
        out = v + (dst_values.back() - src_values.back());
    } else {
        const auto it = std::upper_bound(src_values.begin(), src_values.end(), v);
        const auto hi = std::min(static_cast<std::size_t>(it - src_values.begin()), n - 1);
        const std::size_t lo = hi - 1;
        const double t = (v - src_values[lo]) / (src_values[hi] - src_values[lo]);
        out = dst_values[lo] + t * (dst_values[hi] - dst_values[lo]);
    }
    return std::clamp(out, kLuminanceMin, kLuminanceMax);
}

TransportPlan monotone_plan_1d(const Histogram1D& src, const Histogram1D& dst)
{
    require_compatible(src, dst);
    const std::size_t n = src.bins();
    TransportPlan plan;
    plan.rows = n;
    plan.cols = n;
    plan.coupling.assign(n * n, 0.0);

    std::size_t i = 0, j = 0;
    double left_src = src.mass[0];
    double left_dst = dst.mass[0];
    while (i < n && j < n) {
        if (left_src < left_dst) {
            plan.coupling[i * n + j] += left_src;
            left_dst -= left_src;
            if (++i < n)
                left_src = src.mass[i];
        } else {
            plan.coupling[i * n + j] += left_dst;
            left_src -= left_dst;
            if (++j < n)
                left_dst = dst.mass[j];
        }
    }

    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const double d = src.center(r) - dst.center(c);
            plan.cost_value += plan.coupling[r * n + c] * d * d;
        }
    plan.converged = true;
    return plan;
}

ColorMapping1D solve_ot_1d(const Histogram1D& src, const Histogram1D& dst)
{
    require_compatible(src, dst);
    const std::size_t n = src.bins();
    const auto cum_src = cumulative(src.mass);
    const auto cum_dst = cumulative(dst.mass);

    ColorMapping1D map;
    map.src_values.resize(n);
    map.dst_values.assign(n, 0.0);
    std::vector<std::size_t> occupied;
    for (std::size_t i = 0; i < n; ++i) {
        map.src_values[i] = src.center(i);
        if (src.mass[i] > 0.0) {
            // CDF at the bin centre, with mass spread uniformly inside the bin
            const double p = cum_src[i] + 0.5 * src.mass[i];
            map.dst_values[i] = quantile(dst, cum_dst, p);
            occupied.push_back(i);
        }
    }
    if (occupied.empty())
        throw ValidationError("solve_ot_1d: source histogram has no mass");

    // Empty source bins carry no mass; interpolate between occupied neighbours
    // and shift rigidly beyond the first/last occupied bin.
    auto shift_from = [&](std::size_t anchor, std::size_t i) {
        return std::clamp(map.src_values[i] + (map.dst_values[anchor] - map.src_values[anchor]), kLuminanceMin,
                          kLuminanceMax);
    };
    for (std::size_t i = 0; i < occupied.front(); ++i)
        map.dst_values[i] = std::min(shift_from(occupied.front(), i), map.dst_values[occupied.front()]);
    for (std::size_t i = occupied.back() + 1; i < n; ++i)
        map.dst_values[i] = std::max(shift_from(occupied.back(), i), map.dst_values[occupied.back()]);
    for (std::size_t k = 0; k + 1 < occupied.size(); ++k) {
        const std::size_t lo = occupied[k], hi = occupied[k + 1];
        for (std::size_t i = lo + 1; i < hi; ++i) {
            const double t = (map.src_values[i] - map.src_values[lo]) / (map.src_values[hi] - map.src_values[lo]);
            map.dst_values[i] = map.dst_values[lo] + t * (map.dst_values[hi] - map.dst_values[lo]);
        }
    }

    map.transport_cost = monotone_plan_1d(src, dst).cost_value;
    return map;
}

double wasserstein1(const Histogram1D& src, const Histogram1D& dst)
{
    require_compatible(src, dst);
    const auto cs = cumulative(src.mass);
    const auto cd = cumulative(dst.mass);
    double total = 0.0;
    for (std::size_t i = 0; i < src.bins(); ++i) {
        // F_src - F_dst is linear inside the bin
        const double d0 = cs[i] - cd[i];
        const double d1 = cs[i + 1] - cd[i + 1];
        const double w = src.width(i);
        if ((d0 >= 0.0 && d1 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0))
            total += 0.5 * w * (std::abs(d0) + std::abs(d1));
        else
            total += 0.5 * w * (d0 * d0 + d1 * d1) / (std::abs(d0) + std::abs(d1));
    }
    return total;
}

} // namespace endoshift
