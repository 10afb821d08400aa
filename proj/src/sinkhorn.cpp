#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "endoshift/error.hpp"
#include "endoshift/ot.hpp"

namespace endoshift {

namespace {

constexpr double kChromaDiagonalSq = 2.0 * (kChromaMax - kChromaMin) * (kChromaMax - kChromaMin);

// Scalings outside [1/kAbsorb, kAbsorb] are folded back into the potentials.
constexpr double kAbsorb = 1e30;

const char* const kDiverged = "sinkhorn diverged; decrease cost scale or raise epsilon";

struct Problem {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<double> cost; // n * m
    std::span<const double> a;
    std::span<const double> b;
    double eps = 0.0;
};

struct DualState {
    std::vector<double> f;
    std::vector<double> g;
    std::size_t iterations = 0;
    double violation = std::numeric_limits<double>::infinity();
    bool converged = false;
    std::vector<double> trace;
};

bool all_finite(const std::vector<double>& v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Returns false when the scalings stop being finite and positive.
bool run_stabilized(const Problem& p, const SinkhornOptions& opts, DualState& st)
{
    const std::size_t n = p.n, m = p.m;
    st.f.assign(n, 0.0);
    st.g.assign(m, 0.0);
    st.trace.clear();
    std::vector<double> kernel(n * m);
    std::vector<double> u(n, 1.0), v(m, 1.0), kv(n), ktu(m);

    auto rebuild_kernel = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            const double* c = &p.cost[i * m];
            double* k = &kernel[i * m];
            for (std::size_t j = 0; j < m; ++j)
                k[j] = std::exp((st.f[i] + st.g[j] - c[j]) / p.eps);
        }
    };
    auto apply_kernel = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            const double* k = &kernel[i * m];
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                s += k[j] * v[j];
            kv[i] = s;
        }
    };
    auto apply_kernel_t = [&] {
        std::fill(ktu.begin(), ktu.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* k = &kernel[i * m];
            const double ui = u[i];
            for (std::size_t j = 0; j < m; ++j)
                ktu[j] += k[j] * ui;
        }
    };
    auto absorb = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            st.f[i] += p.eps * std::log(u[i]);
            u[i] = 1.0;
        }
        for (std::size_t j = 0; j < m; ++j) {
            st.g[j] += p.eps * std::log(v[j]);
            v[j] = 1.0;
        }
        rebuild_kernel();
    };

    rebuild_kernel();
    apply_kernel();
    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        for (std::size_t i = 0; i < n; ++i)
            u[i] = p.a[i] / kv[i];
        apply_kernel_t();
        for (std::size_t j = 0; j < m; ++j)
            v[j] = p.b[j] / ktu[j];
        apply_kernel();

        // columns are exact after the v update; rows carry the error
        double viol = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            viol = std::max(viol, std::abs(u[i] * kv[i] - p.a[i]));
        if (!std::isfinite(viol) || !all_finite(u) || !all_finite(v))
            return false;
        for (double x : kv)
            if (!(x > 0.0))
                return false;

        st.iterations = it;
        st.violation = viol;
        if (opts.record_trace)
            st.trace.push_back(viol);
        if (viol < opts.tol) {
            st.converged = true;
            break;
        }
        const auto out_of_range = [](double x) { return x > kAbsorb || x < 1.0 / kAbsorb; };
        if (std::any_of(u.begin(), u.end(), out_of_range) || std::any_of(v.begin(), v.end(), out_of_range)) {
            absorb();
            apply_kernel();
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        st.f[i] += p.eps * std::log(u[i]);
    for (std::size_t j = 0; j < m; ++j)
        st.g[j] += p.eps * std::log(v[j]);
    return all_finite(st.f) && all_finite(st.g);
}

void run_log_domain(const Problem& p, const SinkhornOptions& opts, DualState& st)
{
    const std::size_t n = p.n, m = p.m;
    st.f.assign(n, 0.0);
    st.g.assign(m, 0.0);
    st.trace.clear();
    st.converged = false;
    std::vector<double> z(std::max(n, m));
    std::vector<double> log_a(n), log_b(m);
    for (std::size_t i = 0; i < n; ++i)
        log_a[i] = std::log(p.a[i]);
    for (std::size_t j = 0; j < m; ++j)
        log_b[j] = std::log(p.b[j]);

    auto lse = [&](std::size_t len) {
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < len; ++k)
            hi = std::max(hi, z[k]);
        double s = 0.0;
        for (std::size_t k = 0; k < len; ++k)
            s += std::exp(z[k] - hi);
        return hi + std::log(s);
    };

    std::vector<double> row_lse(n);
    for (std::size_t it = 1; it <= opts.max_iter + 1; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j)
                z[j] = (st.g[j] - p.cost[i * m + j]) / p.eps;
            row_lse[i] = lse(m);
        }
        if (it > 1) {
            // row sums of the plan from the previous (f, g) pair
            double viol = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                viol = std::max(viol, std::abs(std::exp(st.f[i] / p.eps + row_lse[i]) - p.a[i]));
            if (!std::isfinite(viol))
                throw NumericalError(kDiverged);
            st.iterations = it - 1;
            st.violation = viol;
            if (opts.record_trace)
                st.trace.push_back(viol);
            if (viol < opts.tol) {
                st.converged = true;
                return;
            }
            if (it == opts.max_iter + 1)
                return;
        }
        for (std::size_t i = 0; i < n; ++i)
            st.f[i] = p.eps * (log_a[i] - row_lse[i]);
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i)
                z[i] = (st.f[i] - p.cost[i * m + j]) / p.eps;
            st.g[j] = p.eps * (log_b[j] - lse(n));
        }
        if (!all_finite(st.f) || !all_finite(st.g))
            throw NumericalError(kDiverged);
    }
}

// Projects a nearly feasible coupling onto the transport polytope: scale
// down over-full rows and columns, then spread the deficit as a rank-one
// correction.
void round_to_polytope(std::vector<double>& plan, std::size_t n, std::size_t m, std::span<const double> a,
                       std::span<const double> b)
{
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            r += plan[i * m + j];
        if (r > a[i]) {
            const double s = a[i] / r;
            for (std::size_t j = 0; j < m; ++j)
                plan[i * m + j] *= s;
        }
    }
    std::vector<double> col(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            col[j] += plan[i * m + j];
    for (std::size_t j = 0; j < m; ++j) {
        if (col[j] > b[j]) {
            const double s = b[j] / col[j];
            for (std::size_t i = 0; i < n; ++i)
                plan[i * m + j] *= s;
        }
    }
    std::vector<double> err_r(n, 0.0), err_c(m, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            r += plan[i * m + j];
        err_r[i] = std::max(a[i] - r, 0.0);
        total += err_r[i];
    }
    std::fill(col.begin(), col.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            col[j] += plan[i * m + j];
    for (std::size_t j = 0; j < m; ++j)
        err_c[j] = std::max(b[j] - col[j], 0.0);
    if (total <= 0.0)
        return;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            plan[i * m + j] += err_r[i] * err_c[j] / total;
}

double max_marginal_error(const std::vector<double>& plan, std::size_t n, std::size_t m, std::span<const double> a,
                          std::span<const double> b)
{
    double worst = 0.0;
    std::vector<double> col(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            r += plan[i * m + j];
            col[j] += plan[i * m + j];
        }
        worst = std::max(worst, std::abs(r - a[i]));
    }
    for (std::size_t j = 0; j < m; ++j)
        worst = std::max(worst, std::abs(col[j] - b[j]));
    return worst;
}

void validate_measure(std::span<const ChromaPoint> pts, std::span<const double> mass, const char* which)
{
    if (pts.empty() || pts.size() != mass.size())
        throw ValidationError(std::string("sinkhorn: ") + which + " support and mass sizes differ or are empty");
    double total = 0.0;
    for (double w : mass) {
        if (!(w > 0.0))
            throw ValidationError(std::string("sinkhorn: ") + which +
                                  " has a zero-mass bin; apply add_floor before solving");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ValidationError(std::string("sinkhorn: ") + which + " mass does not sum to 1");
}

} // namespace

double chroma_ground_cost(const ChromaPoint& x, const ChromaPoint& y)
{
    const double da = x.a - y.a;
    const double db = x.b - y.b;
    return (da * da + db * db) / kChromaDiagonalSq;
}

SinkhornResult sinkhorn_points(std::span<const ChromaPoint> src, std::span<const double> src_mass,
                               std::span<const ChromaPoint> dst, std::span<const double> dst_mass,
                               const SinkhornOptions& opts)
{
    if (!(opts.epsilon > 0.0))
        throw ValidationError("sinkhorn: epsilon must be > 0");
    if (!(opts.tol > 0.0))
        throw ValidationError("sinkhorn: tol must be > 0");
    if (opts.max_iter == 0)
        throw ValidationError("sinkhorn: max_iter must be >= 1");
    validate_measure(src, src_mass, "source");
    validate_measure(dst, dst_mass, "target");

    Problem p;
    p.n = src.size();
    p.m = dst.size();
    p.a = src_mass;
    p.b = dst_mass;
    p.cost.resize(p.n * p.m);
    double max_cost = 0.0;
    for (std::size_t i = 0; i < p.n; ++i)
        for (std::size_t j = 0; j < p.m; ++j) {
            const double c = chroma_ground_cost(src[i], dst[j]);
            if (!std::isfinite(c))
                throw NumericalError(kDiverged);
            p.cost[i * p.m + j] = c;
            max_cost = std::max(max_cost, c);
        }

    SinkhornResult result;
    result.max_cost = max_cost;
    TransportPlan& plan = result.plan;
    plan.rows = p.n;
    plan.cols = p.m;

    if (max_cost == 0.0) {
        // all atoms coincide: every coupling is optimal, the entropic one is the product
        plan.coupling.resize(p.n * p.m);
        for (std::size_t i = 0; i < p.n; ++i)
            for (std::size_t j = 0; j < p.m; ++j)
                plan.coupling[i * p.m + j] = p.a[i] * p.b[j];
        plan.converged = true;
        plan.marginal_violation = max_marginal_error(plan.coupling, p.n, p.m, p.a, p.b);
        result.f.assign(p.n, 0.0);
        result.g.assign(p.m, 0.0);
        return result;
    }

    p.eps = opts.epsilon * max_cost;
    result.epsilon_abs = p.eps;

    DualState st;
    bool ok = false;
    if (opts.scheme == SinkhornScheme::Stabilized)
        ok = run_stabilized(p, opts, st);
    if (!ok) {
        result.used_log_fallback = opts.scheme == SinkhornScheme::Stabilized;
        run_log_domain(p, opts, st);
    }

    plan.coupling.resize(p.n * p.m);
    for (std::size_t i = 0; i < p.n; ++i)
        for (std::size_t j = 0; j < p.m; ++j)
            plan.coupling[i * p.m + j] = std::exp((st.f[i] + st.g[j] - p.cost[i * p.m + j]) / p.eps);
    if (!all_finite(plan.coupling))
        throw NumericalError(kDiverged);

    plan.iterations_used = st.iterations;
    plan.converged = st.converged;
    plan.marginal_violation = max_marginal_error(plan.coupling, p.n, p.m, p.a, p.b);
    round_to_polytope(plan.coupling, p.n, p.m, p.a, p.b);
    for (std::size_t k = 0; k < plan.coupling.size(); ++k)
        plan.cost_value += plan.coupling[k] * p.cost[k];

    result.f = std::move(st.f);
    result.g = std::move(st.g);
    result.trace = std::move(st.trace);
    return result;
}

TransportPlan sinkhorn(const Histogram2D& src, const Histogram2D& dst, double epsilon, double tol,
                       std::size_t max_iter)
{
    SinkhornOptions opts;
    opts.epsilon = epsilon;
    opts.tol = tol;
    opts.max_iter = max_iter;
    return sinkhorn_points(src.centers, src.mass, dst.centers, dst.mass, opts).plan;
}

ColorMapping2D barycentric_projection(const TransportPlan& plan, std::span<const ChromaPoint> src_centers,
                                      std::span<const ChromaPoint> dst_centers)
{
    if (plan.rows != src_centers.size() || plan.cols != dst_centers.size() ||
        plan.coupling.size() != plan.rows * plan.cols)
        throw ValidationError("barycentric_projection: plan shape does not match the centre sequences");

    ColorMapping2D map;
    map.src_centers.assign(src_centers.begin(), src_centers.end());
    map.dst_points.resize(plan.rows);
    map.src_mass.resize(plan.rows);
    for (std::size_t i = 0; i < plan.rows; ++i) {
        double w = 0.0, sa = 0.0, sb = 0.0;
        for (std::size_t j = 0; j < plan.cols; ++j) {
            const double p = plan.at(i, j);
            w += p;
            sa += p * dst_centers[j].a;
            sb += p * dst_centers[j].b;
        }
        map.src_mass[i] = w;
        map.dst_points[i] = w < 1e-15 ? src_centers[i] : ChromaPoint{sa / w, sb / w};
    }
    return map;
}

ChromaPoint entropic_map_at(const ChromaPoint& x, const SinkhornResult& solve, std::span<const ChromaPoint> dst)
{
    if (solve.g.size() != dst.size())
        throw ValidationError("entropic_map_at: potential and target sizes differ");
    if (solve.epsilon_abs <= 0.0) {
        // degenerate solve (single coincident support): all targets equal
        return dst.front();
    }
    std::vector<double> z(dst.size());
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < dst.size(); ++j) {
        z[j] = (solve.g[j] - chroma_ground_cost(x, dst[j])) / solve.epsilon_abs;
        hi = std::max(hi, z[j]);
    }
    double w = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t j = 0; j < dst.size(); ++j) {
        const double e = std::exp(z[j] - hi);
        w += e;
        sa += e * dst[j].a;
        sb += e * dst[j].b;
    }
    return {sa / w, sb / w};
}

void write_plan_diagnostics(std::ostream& os, const SinkhornResult& solve)
{
    const TransportPlan& plan = solve.plan;
    char line[256];
    std::snprintf(line, sizeof line,
                  "# iterations %zu converged %d marginal_violation %.6g cost %.17g epsilon %.17g log_fallback %d\n",
                  plan.iterations_used, plan.converged ? 1 : 0, plan.marginal_violation, plan.cost_value,
                  solve.epsilon_abs, solve.used_log_fallback ? 1 : 0);
    os << line;
    std::snprintf(line, sizeof line, "# coupling %zu x %zu\n", plan.rows, plan.cols);
    os << line;
    for (std::size_t i = 0; i < plan.rows; ++i) {
        for (std::size_t j = 0; j < plan.cols; ++j) {
            std::snprintf(line, sizeof line, j == 0 ? "%.17g" : " %.17g", plan.at(i, j));
            os << line;
        }
        os << '\n';
    }
    os << "# trace\n";
    for (std::size_t k = 0; k < solve.trace.size(); ++k) {
        std::snprintf(line, sizeof line, "%zu %.6g\n", k + 1, solve.trace[k]);
        os << line;
    }
}

} // namespace endoshift
