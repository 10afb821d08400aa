#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "endoshift/histogram.hpp"

namespace endoshift {

/// Dense coupling between a source and a target discrete measure.
struct TransportPlan {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> coupling; // rows * cols, row-major
    /// Σ coupling * cost, in the solver's ground-cost units.
    double cost_value = 0.0;
    std::size_t iterations_used = 0;
    /// Max |row/col sum - marginal| when the iteration stopped.
    double marginal_violation = 0.0;
    bool converged = false;

    double at(std::size_t i, std::size_t j) const { return coupling[i * cols + j]; }
};

// ---------------------------------------------------------------------------
// Exact 1D transport

struct ColorMapping1D {
    std::vector<double> src_values; // bin centres, strictly increasing
    std::vector<double> dst_values; // non-decreasing
    /// Σ π_ij (c_i - c_j)² of the monotone coupling between bin centres.
    double transport_cost = 0.0;

    /// Piecewise-linear evaluation between representatives; constant offset
    /// beyond the ends, clamped to the luminance range.
    double operator()(double v) const;
};

/// Monotone rearrangement (CDF matching). Throws "incompatible histograms"
/// when the edges differ.
ColorMapping1D solve_ot_1d(const Histogram1D& src, const Histogram1D& dst);

/// North-west-corner coupling of two 1D histograms; optimal for any convex
/// cost of |x - y| on the line. Cost uses squared distance between centres.
TransportPlan monotone_plan_1d(const Histogram1D& src, const Histogram1D& dst);

/// Wasserstein-1 distance between two 1D histograms with uniform density
/// inside each bin (∫ |F_src - F_dst|).
double wasserstein1(const Histogram1D& src, const Histogram1D& dst);

// ---------------------------------------------------------------------------
// Entropic 2D transport

enum class SinkhornScheme {
    /// Scaling iterations on a kernel that is periodically re-absorbed into
    /// log-domain potentials.
    Stabilized,
    /// Plain log-sum-exp updates of the dual potentials.
    LogDomain,
};

struct SinkhornOptions {
    /// Regularisation relative to the largest ground cost of the instance.
    double epsilon = 0.01;
    double tol = 1e-6;
    std::size_t max_iter = 2000;
    SinkhornScheme scheme = SinkhornScheme::Stabilized;
    /// Record marginal violation after every iteration.
    bool record_trace = false;
};

struct SinkhornResult {
    TransportPlan plan;
    /// Dual potentials in ground-cost units.
    std::vector<double> f;
    std::vector<double> g;
    /// Absolute regularisation actually used (epsilon * max cost).
    double epsilon_abs = 0.0;
    double max_cost = 0.0;
    std::vector<double> trace;
    /// True when the stabilized scheme failed and the log-domain path ran.
    bool used_log_fallback = false;
};

/// Squared Euclidean distance normalised by the squared diagonal of the
/// chroma grid, so the full range maps to [0, 1].
double chroma_ground_cost(const ChromaPoint& x, const ChromaPoint& y);

/// Entropic OT between weighted point clouds. Weights must be strictly
/// positive and each sum to 1. The returned coupling is rounded onto the
/// transport polytope so its marginals are exact up to round-off.
SinkhornResult sinkhorn_points(std::span<const ChromaPoint> src, std::span<const double> src_mass,
                               std::span<const ChromaPoint> dst, std::span<const double> dst_mass,
                               const SinkhornOptions& opts = {});

/// Entropic OT between floored chroma histograms over their bin centres.
TransportPlan sinkhorn(const Histogram2D& src, const Histogram2D& dst, double epsilon = 0.01,
                       double tol = 1e-6, std::size_t max_iter = 2000);

struct ColorMapping2D {
    std::vector<ChromaPoint> src_centers;
    std::vector<ChromaPoint> dst_points;
    std::vector<double> src_mass;
};

/// dst_points[i] = Σ_j π_ij y_j / Σ_j π_ij; rows with mass below 1e-15 map to
/// their own source centre.
ColorMapping2D barycentric_projection(const TransportPlan& plan, std::span<const ChromaPoint> src_centers,
                                      std::span<const ChromaPoint> dst_centers);

/// Barycentre of the entropic map at an arbitrary point x, from the target
/// potential: weights ∝ exp((g_j - c(x, y_j)) / ε). For a source atom this is
/// exactly its barycentric projection.
ChromaPoint entropic_map_at(const ChromaPoint& x, const SinkhornResult& solve, std::span<const ChromaPoint> dst);

/// Coupling plus convergence trace, for offline inspection.
void write_plan_diagnostics(std::ostream& os, const SinkhornResult& solve);

} // namespace endoshift
