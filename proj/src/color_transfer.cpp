#include "endoshift/color_transfer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>

#include "endoshift/error.hpp"

namespace endoshift {

namespace {

constexpr double kSpatialSigma = 1.5;
constexpr int kSmoothRadius = 3;
constexpr double kRangeSigma = 10.0;

bool is_constant(const RgbImage& img)
{
    const auto px = img.pixels();
    for (std::size_t i = 3; i < px.size(); i += 3)
        if (px[i] != px[0] || px[i + 1] != px[1] || px[i + 2] != px[2])
            return false;
    return true;
}

SinkhornOptions solver_options(const TransferConfig& cfg)
{
    SinkhornOptions o;
    o.epsilon = cfg.epsilon;
    o.tol = cfg.tol;
    o.max_iter = cfg.max_iter;
    return o;
}

SinkhornResult solve(const ChromaSupport& x, const ChromaSupport& y, const TransferConfig& cfg)
{
    return sinkhorn_points(x.points, x.mass, y.points, y.mass, solver_options(cfg));
}

// Displacement of the chroma map, sampled on the geometric bin grid.
struct DisplacementGrid {
    std::size_t n = 0;
    double lo = kChromaMin;
    double step = 1.0;
    std::vector<double> da;
    std::vector<double> db;

    std::pair<double, double> at(double a, double b) const
    {
        const double max = static_cast<double>(n - 1);
        const double fa = std::clamp((a - lo) / step - 0.5, 0.0, max);
        const double fb = std::clamp((b - lo) / step - 0.5, 0.0, max);
        const auto ia = std::min(static_cast<std::size_t>(fa), n - 2);
        const auto ib = std::min(static_cast<std::size_t>(fb), n - 2);
        const double ta = fa - static_cast<double>(ia);
        const double tb = fb - static_cast<double>(ib);
        auto lerp2 = [&](const std::vector<double>& v) {
            const double v00 = v[ia * n + ib], v01 = v[ia * n + ib + 1];
            const double v10 = v[(ia + 1) * n + ib], v11 = v[(ia + 1) * n + ib + 1];
            return (v00 * (1 - tb) + v01 * tb) * (1 - ta) + (v10 * (1 - tb) + v11 * tb) * ta;
        };
        return {lerp2(da), lerp2(db)};
    }
};

DisplacementGrid displacement_grid(const Histogram2D& grid, const SinkhornResult& to_ref,
                                   const std::vector<ChromaPoint>& ref_points, const SinkhornResult* self,
                                   const std::vector<ChromaPoint>& src_points)
{
    DisplacementGrid d;
    d.n = grid.n_a();
    d.step = (kChromaMax - kChromaMin) / static_cast<double>(d.n);
    d.da.resize(d.n * d.n);
    d.db.resize(d.n * d.n);
    for (std::size_t k = 0; k < d.n * d.n; ++k) {
        const ChromaPoint node = grid.geometric_center(k);
        const ChromaPoint t = entropic_map_at(node, to_ref, ref_points);
        const ChromaPoint base = self ? entropic_map_at(node, *self, src_points) : node;
        d.da[k] = t.a - base.a;
        d.db[k] = t.b - base.b;
    }
    return d;
}

// Joint-bilateral filter of the displacement, guided by the source colours.
void smooth_displacement(const LabImage& guide, std::vector<double>& da, std::vector<double>& db)
{
    const auto w = static_cast<long>(guide.width), h = static_cast<long>(guide.height);
    std::vector<double> spatial((2 * kSmoothRadius + 1) * (2 * kSmoothRadius + 1));
    for (int dy = -kSmoothRadius; dy <= kSmoothRadius; ++dy)
        for (int dx = -kSmoothRadius; dx <= kSmoothRadius; ++dx)
            spatial[(dy + kSmoothRadius) * (2 * kSmoothRadius + 1) + dx + kSmoothRadius] =
                std::exp(-(dx * dx + dy * dy) / (2 * kSpatialSigma * kSpatialSigma));
    const double inv_range = 1.0 / (2 * kRangeSigma * kRangeSigma);

    std::vector<double> out_a(da.size()), out_b(db.size());
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            const auto c = static_cast<std::size_t>(y * w + x);
            double sw = 0, sa = 0, sb = 0;
            for (long dy = -kSmoothRadius; dy <= kSmoothRadius; ++dy) {
                const long yy = y + dy;
                if (yy < 0 || yy >= h)
                    continue;
                for (long dx = -kSmoothRadius; dx <= kSmoothRadius; ++dx) {
                    const long xx = x + dx;
                    if (xx < 0 || xx >= w)
                        continue;
                    const auto q = static_cast<std::size_t>(yy * w + xx);
                    const double dl = guide.L[q] - guide.L[c];
                    const double dA = guide.a[q] - guide.a[c];
                    const double dB = guide.b[q] - guide.b[c];
                    const double wt = spatial[(dy + kSmoothRadius) * (2 * kSmoothRadius + 1) + dx + kSmoothRadius] *
                                      std::exp(-(dl * dl + dA * dA + dB * dB) * inv_range);
                    sw += wt;
                    sa += wt * da[q];
                    sb += wt * db[q];
                }
            }
            out_a[c] = sa / sw;
            out_b[c] = sb / sw;
        }
    da.swap(out_a);
    db.swap(out_b);
}

} // namespace

void TransferConfig::validate() const
{
    if (l_bins < 2 || ab_bins < 2)
        throw ValidationError("bin counts must be >= 2");
    if (max_iter < 2)
        throw ValidationError("max_iter must be >= 2");
    if (!(epsilon > 0) || !(tol > 0) || !(floor > 0))
        throw ValidationError("epsilon, tol and floor must be > 0");
}

ChromaSupport chroma_support(const Histogram2D& h)
{
    ChromaSupport s;
    double total = 0;
    for (std::size_t k = 0; k < h.bins(); ++k)
        if (h.mass[k] > 0) {
            s.bins.push_back(k);
            s.points.push_back(h.centers[k]);
            s.mass.push_back(h.mass[k]);
            total += h.mass[k];
        }
    if (s.bins.empty())
        throw ValidationError("empty chroma histogram");
    for (double& m : s.mass)
        m /= total;
    return s;
}

double chroma_transport_cost(const LabImage& x, const LabImage& y, const TransferConfig& cfg)
{
    const auto sx = chroma_support(build_chroma_hist(x, cfg.ab_bins, cfg.ab_bins));
    const auto sy = chroma_support(build_chroma_hist(y, cfg.ab_bins, cfg.ab_bins));
    return solve(sx, sy, cfg).plan.cost_value;
}

TransferResult transfer_colors(const RgbImage& src, const RgbImage& ref, const TransferConfig& cfg,
                               TransferDiagnostics* diagnostics)
{
    cfg.validate();
    if (src.empty() || ref.empty())
        throw ValidationError("transfer_colors: empty image");

    TransferReport report;
    const LabImage src_lab = rgb_to_lab(src);
    const LabImage ref_lab = rgb_to_lab(ref);
    if (is_constant(ref))
        report.warnings.push_back("reference is a constant colour; output collapses toward it");

    // luminance: exact 1D transport
    const Histogram1D src_l = build_luminance_hist(src_lab, cfg.l_bins);
    const Histogram1D ref_l = build_luminance_hist(ref_lab, cfg.l_bins);
    const ColorMapping1D l_map = solve_ot_1d(add_floor(src_l, cfg.floor), add_floor(ref_l, cfg.floor));
    report.l_w1_pre = wasserstein1(src_l, ref_l);

    // chroma: entropic transport between occupied bins
    const Histogram2D src_ab = build_chroma_hist(src_lab, cfg.ab_bins, cfg.ab_bins);
    const Histogram2D ref_ab = build_chroma_hist(ref_lab, cfg.ab_bins, cfg.ab_bins);
    const ChromaSupport xs = chroma_support(src_ab);
    const ChromaSupport ys = chroma_support(ref_ab);
    SinkhornResult to_ref = solve(xs, ys, cfg);
    report.chroma_cost_pre = to_ref.plan.cost_value;
    report.iterations = to_ref.plan.iterations_used;
    report.converged = to_ref.plan.converged;
    std::optional<SinkhornResult> self;
    if (cfg.debias) {
        self = solve(xs, xs, cfg);
        report.iterations += self->plan.iterations_used;
        report.converged = report.converged && self->plan.converged;
    }
    if (!report.converged)
        report.warnings.push_back("sinkhorn did not converge within max_iter");

    const DisplacementGrid grid =
        displacement_grid(src_ab, to_ref, ys.points, self ? &*self : nullptr, xs.points);

    const std::size_t n = src_lab.pixel_count();
    std::vector<double> da(n), db(n);
    for (std::size_t i = 0; i < n; ++i)
        std::tie(da[i], db[i]) = grid.at(src_lab.a[i], src_lab.b[i]);
    if (cfg.post_smooth)
        smooth_displacement(src_lab, da, db);

    LabImage out(src_lab.width, src_lab.height);
    for (std::size_t i = 0; i < n; ++i) {
        out.L[i] = l_map(src_lab.L[i]);
        out.a[i] = src_lab.a[i] + da[i];
        out.b[i] = src_lab.b[i] + db[i];
    }
    LabToRgbResult rgb = lab_to_rgb(out);
    report.clamped_fraction = rgb.clamped_fraction;

    const LabImage out_lab = rgb_to_lab(rgb.image);
    report.l_w1_post = wasserstein1(build_luminance_hist(out_lab, cfg.l_bins), ref_l);
    report.chroma_cost_post = chroma_transport_cost(out_lab, ref_lab, cfg);

    if (diagnostics) {
        diagnostics->src_l = src_l;
        diagnostics->ref_l = ref_l;
        diagnostics->src_ab = src_ab;
        diagnostics->ref_ab = ref_ab;
        diagnostics->l_map = l_map;
        diagnostics->chroma_solve = std::move(to_ref);
    }
    return {std::move(rgb.image), std::move(report)};
}

} // namespace endoshift
