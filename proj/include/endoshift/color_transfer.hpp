#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "endoshift/color_space.hpp"
#include "endoshift/histogram.hpp"
#include "endoshift/ot.hpp"

namespace endoshift {

struct TransferConfig {
    std::size_t l_bins = kDefaultLuminanceBins;
    std::size_t ab_bins = kDefaultChromaBins; // per axis
    /// Sinkhorn regularisation, relative to the largest ground cost.
    double epsilon = 0.01;
    double tol = 1e-6;
    std::size_t max_iter = 2000;
    double floor = kDefaultMassFloor;
    /// Edge-preserving smoothing of the chroma displacement field.
    bool post_smooth = true;
    /// Subtract the source self-transport map from the source-to-reference
    /// map, so a reference equal to the source leaves colours untouched.
    bool debias = true;

    /// Throws ValidationError on counts < 2 or non-positive tolerances.
    void validate() const;
};

struct TransferReport {
    double l_w1_pre = 0.0;
    double l_w1_post = 0.0;
    /// Entropic chroma transport cost to the reference, ground-cost units.
    double chroma_cost_pre = 0.0;
    double chroma_cost_post = 0.0;
    double clamped_fraction = 0.0;
    std::size_t iterations = 0;
    bool converged = true;
    std::vector<std::string> warnings;
};

/// Intermediate products of one transfer, filled on request.
struct TransferDiagnostics {
    Histogram1D src_l;
    Histogram1D ref_l;
    Histogram2D src_ab;
    Histogram2D ref_ab;
    ColorMapping1D l_map;
    SinkhornResult chroma_solve;
};

struct TransferResult {
    RgbImage image;
    TransferReport report;
};

TransferResult transfer_colors(const RgbImage& src, const RgbImage& ref, const TransferConfig& cfg = {},
                               TransferDiagnostics* diagnostics = nullptr);

/// Occupied bins of a chroma histogram as a weighted point cloud (pixel
/// centroids, masses renormalised to 1).
struct ChromaSupport {
    std::vector<std::size_t> bins;
    std::vector<ChromaPoint> points;
    std::vector<double> mass;
};

ChromaSupport chroma_support(const Histogram2D& h);

/// Entropic transport cost between the chroma distributions of two images.
double chroma_transport_cost(const LabImage& x, const LabImage& y, const TransferConfig& cfg);

} // namespace endoshift
