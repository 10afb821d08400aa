#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "endoshift/color_space.hpp"

namespace endoshift {

/// Decodes PNG (8/16-bit, gray/RGB, alpha dropped), baseline JPEG, or binary
/// PPM (P6). Channel values are scaled to [0,1].
RgbImage read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG. Text entries become tEXt chunks; no timestamp is
/// written, so identical inputs give identical bytes.
void write_png(const std::filesystem::path& path, const RgbImage& img,
               const std::map<std::string, std::string>& text = {});

/// Reads back the tEXt chunks of a PNG.
std::map<std::string, std::string> read_png_text(const std::filesystem::path& path);

/// Rounds every channel to the nearest 8-bit level, as write_png would store it.
RgbImage quantize_8bit(const RgbImage& img);

/// Source and result next to each other, separated by a 4 px white gutter.
RgbImage side_by_side(const RgbImage& left, const RgbImage& right);

} // namespace endoshift
