#include "endoshift/image_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "endoshift/error.hpp"

namespace endoshift {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f)
        throw ValidationError("cannot open " + path.string());
    return f;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg)
{
    auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
    *buf = msg;
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

RgbImage read_png(const std::filesystem::path& path)
{
    auto file = open_file(path, "rb");
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error("libpng initialisation failed");
    }

    // buffers live above setjmp so a longjmp never skips their destructors
    std::vector<unsigned char> buf;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ValidationError("cannot decode " + path.string() + ": " + err);
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    if (depth == 16)
        png_set_swap(png); // host order on little-endian
    png_read_update_info(png, info);

    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buf.resize(rowbytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = buf.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    RgbImage img(width, height);
    auto px = img.pixels();
    const std::size_t n = static_cast<std::size_t>(width) * height * 3;
    if (out_depth == 16) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint16_t v;
            std::memcpy(&v, buf.data() + 2 * i, 2);
            px[i] = v / 65535.0;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            px[i] = buf[i] / 255.0;
    }
    return img;
}

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

[[noreturn]] void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* e = reinterpret_cast<JpegError*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, e->message);
    std::longjmp(e->jump, 1);
}

RgbImage read_jpeg(const std::filesystem::path& path)
{
    auto file = open_file(path, "rb");
    jpeg_decompress_struct cinfo{};
    JpegError err{};
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_exit;
    std::vector<unsigned char> buf;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw ValidationError("cannot decode " + path.string() + ": " + err.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const std::size_t w = cinfo.output_width, h = cinfo.output_height;
    buf.resize(w * h * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);

    RgbImage img(w, h);
    auto px = img.pixels();
    for (std::size_t i = 0; i < buf.size(); ++i)
        px[i] = buf[i] / 255.0;
    return img;
}

RgbImage read_ppm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::string magic;
    in >> magic;
    auto next_int = [&]() {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string skip;
            std::getline(in, skip);
            in >> std::ws;
        }
        long v = -1;
        in >> v;
        return v;
    };
    const long w = next_int(), h = next_int(), maxval = next_int();
    if (magic != "P6" || w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw ValidationError("cannot decode " + path.string() + ": unsupported PPM header");
    in.get();
    std::vector<unsigned char> buf(static_cast<std::size_t>(w * h * 3));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw ValidationError("cannot decode " + path.string() + ": truncated PPM data");
    RgbImage img(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
    auto px = img.pixels();
    for (std::size_t i = 0; i < buf.size(); ++i)
        px[i] = buf[i] / static_cast<double>(maxval);
    return img;
}

} // namespace

RgbImage read_image(const std::filesystem::path& path)
{
    std::array<unsigned char, 8> magic{};
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw ValidationError("cannot open " + path.string());
        in.read(reinterpret_cast<char*>(magic.data()), magic.size());
        if (in.gcount() < 3)
            throw ValidationError("cannot decode " + path.string() + ": file too short");
    }
    RgbImage img;
    if (png_sig_cmp(magic.data(), 0, 8) == 0)
        img = read_png(path);
    else if (magic[0] == 0xFF && magic[1] == 0xD8)
        img = read_jpeg(path);
    else if (magic[0] == 'P' && magic[1] == '6')
        img = read_ppm(path);
    else
        throw ValidationError("cannot decode " + path.string() + ": unrecognised image format");
    if (img.empty())
        throw ValidationError("cannot decode " + path.string() + ": empty image");
    return img;
}

void write_png(const std::filesystem::path& path, const RgbImage& img, const std::map<std::string, std::string>& text)
{
    if (img.empty())
        throw ValidationError("write_png: empty image");
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto file = open_file(path, "wb");

    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("libpng initialisation failed");
    }
    std::vector<unsigned char> buf(img.pixel_count() * 3);
    const auto px = img.pixels();
    for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = to_byte(px[i]);
    std::vector<png_bytep> rows(img.height());
    for (std::size_t y = 0; y < img.height(); ++y)
        rows[y] = buf.data() + y * img.width() * 3;

    std::vector<png_text> chunks;
    std::vector<std::string> keys, values;
    keys.reserve(text.size());
    values.reserve(text.size());
    for (const auto& [k, v] : text) {
        keys.push_back(k.substr(0, 79));
        values.push_back(v);
    }
    for (std::size_t i = 0; i < keys.size(); ++i) {
        png_text t{};
        t.compression = PNG_TEXT_COMPRESSION_NONE;
        t.key = keys[i].data();
        t.text = values[i].data();
        t.text_length = values[i].size();
        chunks.push_back(t);
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("cannot write " + path.string() + ": " + err);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (!chunks.empty())
        png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::map<std::string, std::string> read_png_text(const std::filesystem::path& path)
{
    auto file = open_file(path, "rb");
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    png_infop end = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || !end) {
        png_destroy_read_struct(&png, &info, &end);
        throw Error("libpng initialisation failed");
    }
    std::map<std::string, std::string> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, &end);
        throw ValidationError("cannot decode " + path.string() + ": " + err);
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    png_textp text = nullptr;
    int count = 0;
    png_get_text(png, info, &text, &count);
    for (int i = 0; i < count; ++i)
        out[text[i].key] = std::string(text[i].text, text[i].text_length);
    png_destroy_read_struct(&png, &info, &end);
    return out;
}

RgbImage quantize_8bit(const RgbImage& img)
{
    RgbImage out = img;
    for (double& v : out.pixels())
        v = to_byte(v) / 255.0;
    return out;
}

RgbImage side_by_side(const RgbImage& left, const RgbImage& right)
{
    constexpr std::size_t gutter = 4;
    const std::size_t h = std::max(left.height(), right.height());
    RgbImage out = RgbImage::filled(left.width() + gutter + right.width(), h, 1.0, 1.0, 1.0);
    for (std::size_t y = 0; y < left.height(); ++y)
        for (std::size_t x = 0; x < left.width(); ++x)
            out.set(x, y, left.at(x, y));
    for (std::size_t y = 0; y < right.height(); ++y)
        for (std::size_t x = 0; x < right.width(); ++x)
            out.set(left.width() + gutter + x, y, right.at(x, y));
    return out;
}

} // namespace endoshift
