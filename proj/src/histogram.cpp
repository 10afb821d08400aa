#include "endoshift/histogram.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "endoshift/error.hpp"

namespace endoshift {

namespace {

std::size_t locate(const std::vector<double>& edges, double v)
{
    const std::size_t n = edges.size() - 1;
    if (!(v > edges.front())) // also catches NaN
        return 0;
    const auto it = std::upper_bound(edges.begin(), edges.end(), v);
    const auto idx = static_cast<std::size_t>(it - edges.begin());
    return std::min(idx - 1, n - 1);
}

template <class H>
H floored(const H& h, double eps_mass)
{
    if (eps_mass < 0.0)
        throw ValidationError("add_floor: eps_mass must be non-negative");
    H out = h;
    if (eps_mass == 0.0)
        return out;
    double total = 0.0;
    for (double& m : out.mass) {
        m += eps_mass;
        total += m;
    }
    for (double& m : out.mass)
        m /= total;
    return out;
}

void put_row(std::ostream& os, const char* fmt, auto... args)
{
    char line[160];
    std::snprintf(line, sizeof line, fmt, args...);
    os << line;
}

} // namespace

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins)
{
    std::vector<double> edges(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    edges.back() = hi;
    return edges;
}

std::size_t Histogram1D::bin_of(double v) const { return locate(edges, v); }

std::size_t Histogram2D::a_bin_of(double a) const { return locate(a_edges, a); }
std::size_t Histogram2D::b_bin_of(double b) const { return locate(b_edges, b); }

ChromaPoint Histogram2D::geometric_center(std::size_t ia, std::size_t ib) const
{
    return {0.5 * (a_edges[ia] + a_edges[ia + 1]), 0.5 * (b_edges[ib] + b_edges[ib + 1])};
}

Histogram1D build_luminance_hist(const LabImage& img, std::size_t n_bins)
{
    if (n_bins < 2)
        throw ValidationError("build_luminance_hist: n_bins must be >= 2");
    if (img.pixel_count() == 0)
        throw ValidationError("empty image");

    Histogram1D h;
    h.edges = uniform_edges(kLuminanceMin, kLuminanceMax, n_bins);
    std::vector<std::size_t> counts(n_bins, 0);
    for (double L : img.L)
        ++counts[h.bin_of(L)];

    const auto total = static_cast<double>(img.pixel_count());
    h.mass.resize(n_bins);
    for (std::size_t i = 0; i < n_bins; ++i)
        h.mass[i] = static_cast<double>(counts[i]) / total;
    return h;
}

Histogram2D build_chroma_hist(const LabImage& img, std::size_t n_a, std::size_t n_b)
{
    if (n_a < 2 || n_b < 2)
        throw ValidationError("build_chroma_hist: bin counts must be >= 2");
    if (img.pixel_count() == 0)
        throw ValidationError("empty image");

    Histogram2D h;
    h.a_edges = uniform_edges(kChromaMin, kChromaMax, n_a);
    h.b_edges = uniform_edges(kChromaMin, kChromaMax, n_b);

    const std::size_t bins = n_a * n_b;
    std::vector<std::size_t> counts(bins, 0);
    std::vector<double> sum_a(bins, 0.0);
    std::vector<double> sum_b(bins, 0.0);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        // Clamp into the binned range so centroids stay inside their bins.
        const double a = std::clamp(img.a[p], kChromaMin, kChromaMax);
        const double b = std::clamp(img.b[p], kChromaMin, kChromaMax);
        const std::size_t k = h.index(h.a_bin_of(a), h.b_bin_of(b));
        ++counts[k];
        sum_a[k] += a;
        sum_b[k] += b;
    }

    const auto total = static_cast<double>(img.pixel_count());
    h.mass.resize(bins);
    h.centers.resize(bins);
    for (std::size_t k = 0; k < bins; ++k) {
        h.mass[k] = static_cast<double>(counts[k]) / total;
        if (counts[k] == 0) {
            h.centers[k] = h.geometric_center(k);
        } else {
            const auto c = static_cast<double>(counts[k]);
            h.centers[k] = {sum_a[k] / c, sum_b[k] / c};
        }
    }
    return h;
}

Histogram1D add_floor(const Histogram1D& h, double eps_mass) { return floored(h, eps_mass); }
Histogram2D add_floor(const Histogram2D& h, double eps_mass) { return floored(h, eps_mass); }

void write_histogram_text(std::ostream& os, const Histogram1D& h)
{
    os << "# bin mass center\n";
    for (std::size_t i = 0; i < h.bins(); ++i)
        put_row(os, "%zu %.17g %.17g\n", i, h.mass[i], h.center(i));
}

void write_histogram_text(std::ostream& os, const Histogram2D& h)
{
    os << "# bin_a bin_b mass center_a center_b\n";
    for (std::size_t ia = 0; ia < h.n_a(); ++ia) {
        for (std::size_t ib = 0; ib < h.n_b(); ++ib) {
            const std::size_t k = h.index(ia, ib);
            put_row(os, "%zu %zu %.17g %.17g %.17g\n", ia, ib, h.mass[k], h.centers[k].a, h.centers[k].b);
        }
    }
}

} // namespace endoshift
