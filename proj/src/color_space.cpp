#include "endoshift/color_space.hpp"

#include <algorithm>
#include <cmath>

#include "endoshift/error.hpp"

namespace endoshift {

namespace {

// D65 reference white as the image of RGB (1,1,1) under the matrix below,
// so white lands exactly on L = 100, a = b = 0.
constexpr double kWhiteX = 0.4124564 + 0.3575761 + 0.1804375;
constexpr double kWhiteY = 0.2126729 + 0.7151522 + 0.0721750;
constexpr double kWhiteZ = 0.0193339 + 0.1191920 + 0.9503041;

constexpr double kEpsilon = 216.0 / 24389.0;
constexpr double kKappa = 24389.0 / 27.0;

double srgb_to_linear(double c)
{
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c)
{
    if (c <= 0.0031308)
        return 12.92 * c;
    // pow of a negative base is NaN; mirror the curve for out-of-gamut values
    if (c < 0.0)
        return -linear_to_srgb(-c);
    return 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) { return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0; }

double lab_f_inv(double f)
{
    const double f3 = f * f * f;
    return f3 > kEpsilon ? f3 : (116.0 * f - 16.0) / kKappa;
}

} // namespace

RgbImage::RgbImage(std::size_t width, std::size_t height)
    : width_(width), height_(height), pixels_(width * height * 3, 0.0)
{
}

RgbImage::RgbImage(std::size_t width, std::size_t height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels))
{
    if (pixels_.size() != width_ * height_ * 3)
        throw ValidationError("pixel buffer size does not match image dimensions");
}

RgbImage RgbImage::filled(std::size_t width, std::size_t height, double r, double g, double b)
{
    RgbImage img(width, height);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        img.pixels_[3 * i] = r;
        img.pixels_[3 * i + 1] = g;
        img.pixels_[3 * i + 2] = b;
    }
    return img;
}

std::array<double, 3> RgbImage::at(std::size_t x, std::size_t y) const
{
    const std::size_t o = 3 * (y * width_ + x);
    return {pixels_[o], pixels_[o + 1], pixels_[o + 2]};
}

void RgbImage::set(std::size_t x, std::size_t y, std::array<double, 3> rgb)
{
    const std::size_t o = 3 * (y * width_ + x);
    pixels_[o] = rgb[0];
    pixels_[o + 1] = rgb[1];
    pixels_[o + 2] = rgb[2];
}

Lab rgb_to_lab(double r, double g, double b)
{
    if (r == g && g == b) {
        // achromatic: Y / Yn is the linear value itself
        return {116.0 * lab_f(srgb_to_linear(r)) - 16.0, 0.0, 0.0};
    }
    const double rl = srgb_to_linear(r);
    const double gl = srgb_to_linear(g);
    const double bl = srgb_to_linear(b);

    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;

    const double fx = lab_f(x / kWhiteX);
    const double fy = lab_f(y / kWhiteY);
    const double fz = lab_f(z / kWhiteZ);

    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> lab_to_rgb_unclamped(const Lab& lab)
{
    const double fy = (lab.L + 16.0) / 116.0;
    const double fx = fy + lab.a / 500.0;
    const double fz = fy - lab.b / 200.0;

    const double x = kWhiteX * lab_f_inv(fx);
    const double y = kWhiteY * (lab.L > kKappa * kEpsilon ? fy * fy * fy : lab.L / kKappa);
    const double z = kWhiteZ * lab_f_inv(fz);

    const double rl = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
    const double gl = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
    const double bl = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;

    return {linear_to_srgb(rl), linear_to_srgb(gl), linear_to_srgb(bl)};
}

LabImage rgb_to_lab(const RgbImage& img)
{
    LabImage out(img.width(), img.height());
    const auto px = img.pixels();
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        const Lab lab = rgb_to_lab(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
        out.L[i] = lab.L;
        out.a[i] = lab.a;
        out.b[i] = lab.b;
    }
    return out;
}

LabToRgbResult lab_to_rgb(const LabImage& img)
{
    LabToRgbResult result{RgbImage(img.width, img.height), 0.0};
    auto px = result.image.pixels();
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const auto rgb = lab_to_rgb_unclamped({img.L[i], img.a[i], img.b[i]});
        bool hit = false;
        for (int c = 0; c < 3; ++c) {
            // tolerate round-off at the gamut boundary
            if (rgb[c] < -1e-9 || rgb[c] > 1.0 + 1e-9)
                hit = true;
            px[3 * i + c] = std::clamp(rgb[c], 0.0, 1.0);
        }
        if (hit)
            ++clamped;
    }
    if (img.pixel_count() > 0)
        result.clamped_fraction = static_cast<double>(clamped) / static_cast<double>(img.pixel_count());
    return result;
}

double mean_delta_e76(const RgbImage& x, const RgbImage& y)
{
    if (x.width() != y.width() || x.height() != y.height())
        throw ValidationError("mean_delta_e76: image dimensions differ");
    if (x.empty())
        return 0.0;
    const auto px = x.pixels();
    const auto py = y.pixels();
    double sum = 0.0;
    for (std::size_t i = 0; i < x.pixel_count(); ++i) {
        const Lab p = rgb_to_lab(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
        const Lab q = rgb_to_lab(py[3 * i], py[3 * i + 1], py[3 * i + 2]);
        sum += delta_e76(p, q);
    }
    return sum / static_cast<double>(x.pixel_count());
}

} // namespace endoshift
