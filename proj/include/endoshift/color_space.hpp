#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace endoshift {

/// Interleaved RGB raster, row-major, channel values in [0,1].
class RgbImage {
public:
    RgbImage() = default;
    RgbImage(std::size_t width, std::size_t height);
    RgbImage(std::size_t width, std::size_t height, std::vector<double> pixels);

    static RgbImage filled(std::size_t width, std::size_t height, double r, double g, double b);

    std::size_t width() const { return width_; }
    std::size_t height() const { return height_; }
    std::size_t pixel_count() const { return width_ * height_; }
    bool empty() const { return pixel_count() == 0; }

    std::span<const double> pixels() const { return pixels_; }
    std::span<double> pixels() { return pixels_; }

    std::array<double, 3> at(std::size_t x, std::size_t y) const;
    void set(std::size_t x, std::size_t y, std::array<double, 3> rgb);

    bool operator==(const RgbImage&) const = default;

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    std::vector<double> pixels_;
};

/// Planar CIELAB raster with the same geometry as its source RgbImage.
struct LabImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> L;
    std::vector<double> a;
    std::vector<double> b;

    LabImage() = default;
    LabImage(std::size_t w, std::size_t h) : width(w), height(h), L(w * h), a(w * h), b(w * h) {}

    std::size_t pixel_count() const { return width * height; }
};

struct Lab {
    double L = 0.0;
    double a = 0.0;
    double b = 0.0;
};

// sRGB companding, D65 reference white.
Lab rgb_to_lab(double r, double g, double b);

/// Unclamped inverse; channels may fall outside [0,1] for out-of-gamut input.
std::array<double, 3> lab_to_rgb_unclamped(const Lab& lab);

LabImage rgb_to_lab(const RgbImage& img);

struct LabToRgbResult {
    RgbImage image;
    /// Fraction of pixels with at least one channel clamped into [0,1].
    double clamped_fraction = 0.0;
};

LabToRgbResult lab_to_rgb(const LabImage& img);

/// CIE 1976 colour difference.
inline double delta_e76(const Lab& p, const Lab& q)
{
    const double dl = p.L - q.L;
    const double da = p.a - q.a;
    const double db = p.b - q.b;
    return std::sqrt(dl * dl + da * da + db * db);
}

/// Mean per-pixel ΔE76 between two rasters of identical geometry.
double mean_delta_e76(const RgbImage& x, const RgbImage& y);

} // namespace endoshift
