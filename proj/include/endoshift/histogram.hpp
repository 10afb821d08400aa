#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "endoshift/color_space.hpp"

namespace endoshift {

inline constexpr double kLuminanceMin = 0.0;
inline constexpr double kLuminanceMax = 100.0;
inline constexpr double kChromaMin = -128.0;
inline constexpr double kChromaMax = 128.0;

inline constexpr std::size_t kDefaultLuminanceBins = 256;
inline constexpr std::size_t kDefaultChromaBins = 64;
inline constexpr double kDefaultMassFloor = 1e-12;

struct Histogram1D {
    std::vector<double> edges; // n_bins + 1, strictly increasing
    std::vector<double> mass;  // n_bins, sums to 1

    std::size_t bins() const { return mass.size(); }
    double center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
    double width(std::size_t i) const { return edges[i + 1] - edges[i]; }

    /// Bin index for value v: interior edges go to the higher bin, values at
    /// or beyond the ends land in the first / last bin.
    std::size_t bin_of(double v) const;
};

struct ChromaPoint {
    double a = 0.0;
    double b = 0.0;

    bool operator==(const ChromaPoint&) const = default;
};

/// Joint (a, b) histogram. Bin (i, j) is stored at i * n_b + j, i along a.
struct Histogram2D {
    std::vector<double> a_edges;
    std::vector<double> b_edges;
    std::vector<double> mass;
    /// Mass-weighted centroid of the pixels in each bin; geometric centre
    /// when the bin is empty.
    std::vector<ChromaPoint> centers;

    std::size_t n_a() const { return a_edges.size() - 1; }
    std::size_t n_b() const { return b_edges.size() - 1; }
    std::size_t bins() const { return mass.size(); }
    std::size_t index(std::size_t ia, std::size_t ib) const { return ia * n_b() + ib; }
    ChromaPoint geometric_center(std::size_t ia, std::size_t ib) const;
    ChromaPoint geometric_center(std::size_t flat) const { return geometric_center(flat / n_b(), flat % n_b()); }

    std::size_t a_bin_of(double a) const;
    std::size_t b_bin_of(double b) const;
};

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins);

Histogram1D build_luminance_hist(const LabImage& img, std::size_t n_bins = kDefaultLuminanceBins);

Histogram2D build_chroma_hist(const LabImage& img, std::size_t n_a = kDefaultChromaBins,
                              std::size_t n_b = kDefaultChromaBins);

/// (mass + eps_mass) renormalised to unit sum.
Histogram1D add_floor(const Histogram1D& h, double eps_mass);
Histogram2D add_floor(const Histogram2D& h, double eps_mass);

// Columnar text dumps: "bin mass center" / "bin_a bin_b mass center_a center_b".
void write_histogram_text(std::ostream& os, const Histogram1D& h);
void write_histogram_text(std::ostream& os, const Histogram2D& h);

} // namespace endoshift
