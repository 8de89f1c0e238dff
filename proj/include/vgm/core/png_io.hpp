#ifndef VGM_CORE_PNG_IO_HPP
#define VGM_CORE_PNG_IO_HPP

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "vgm/core/errors.hpp"
#include "vgm/core/image.hpp"

namespace vgm::png {

/// Raw decoded PNG: interleaved samples in host order.
struct RawImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<std::uint16_t> samples;
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f) {
            std::fclose(f);
        }
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void error_fn(png_structp png, png_const_charp msg)
{
    auto* what = static_cast<std::string*>(png_get_error_ptr(png));
    if (what) {
        *what = msg;
    }
    png_longjmp(png, 1);
}

inline void warning_fn(png_structp, png_const_charp)
{
}

} // namespace detail

inline RawImage read(const std::string& path)
{
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) {
        throw MissingFileError("missing file: " + path);
    }
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw std::runtime_error("not a PNG file: " + path);
    }
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::error_fn, detail::warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    RawImage out;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("corrupt PNG " + path + ": " + err);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_strip_alpha(png);
    }
    if (color_type & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(png);
    }
    if (png_get_bit_depth(png, info) == 16) {
        png_set_swap(png);
    }
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * out.height);
    rows.resize(out.height);
    for (int y = 0; y < out.height; ++y) {
        rows[y] = buffer.data() + rowbytes * y;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
    out.samples.resize(n);
    if (out.bit_depth == 16) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint16_t v;
            std::memcpy(&v, buffer.data() + 2 * i, 2);
            out.samples[i] = v;
        }
    }
    else {
        for (std::size_t i = 0; i < n; ++i) {
            out.samples[i] = buffer[i];
        }
    }
    return out;
}

/// Writes interleaved samples; bit_depth 8 or 16, channels 1 (gray) or 3 (RGB).
inline void write(const std::string& path, int width, int height, int channels, int bit_depth, const std::vector<std::uint16_t>& samples)
{
    if ((channels != 1 && channels != 3) || (bit_depth != 8 && bit_depth != 16)) {
        throw std::invalid_argument("png write: unsupported format");
    }
    if (samples.size() != static_cast<std::size_t>(width) * height * channels) {
        throw std::invalid_argument("png write: sample count mismatch");
    }
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) {
        throw std::runtime_error("cannot open for writing: " + path);
    }
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::error_fn, detail::warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng initialisation failed");
    }
    const int bytes = bit_depth / 8;
    const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * bytes;
    std::vector<unsigned char> buffer(rowbytes * height);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (bytes == 2) {
            buffer[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
            buffer[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
        }
        else {
            buffer[i] = static_cast<unsigned char>(samples[i]);
        }
    }
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
        rows[y] = buffer.data() + rowbytes * y;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed writing PNG " + path + ": " + err);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline std::uint8_t to_byte(float v)
{
    const float c = std::min(1.0f, std::max(0.0f, v));
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

inline float from_byte(std::uint16_t b)
{
    return static_cast<float>(b) / 255.0f;
}

inline void write_rgb(const std::string& path, const RgbImage& img)
{
    std::vector<std::uint16_t> s(img.size() * 3);
    for (std::size_t i = 0; i < img.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            s[3 * i + c] = to_byte(img[i][c]);
        }
    }
    write(path, img.width(), img.height(), 3, 8, s);
}

inline RgbImage read_rgb(const std::string& path)
{
    const RawImage raw = read(path);
    if (raw.bit_depth != 8 || (raw.channels != 3 && raw.channels != 1)) {
        throw std::runtime_error("expected 8-bit RGB PNG: " + path);
    }
    RgbImage img(raw.width, raw.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (raw.channels == 3) {
            img[i] = Rgb(from_byte(raw.samples[3 * i]), from_byte(raw.samples[3 * i + 1]), from_byte(raw.samples[3 * i + 2]));
        }
        else {
            const float g = from_byte(raw.samples[i]);
            img[i] = Rgb(g, g, g);
        }
    }
    return img;
}

/// Depth PNG: 16-bit gray, value = meters * depth_scale, 0 = invalid.
inline void write_depth(const std::string& path, const DepthImage& depth, double depth_scale)
{
    std::vector<std::uint16_t> s(depth.size());
    for (std::size_t i = 0; i < depth.size(); ++i) {
        const float d = depth[i];
        if (!valid_depth(d)) {
            s[i] = 0;
            continue;
        }
        const double q = std::round(static_cast<double>(d) * depth_scale);
        s[i] = static_cast<std::uint16_t>(std::min(65535.0, std::max(0.0, q)));
    }
    write(path, depth.width(), depth.height(), 1, 16, s);
}

inline DepthImage read_depth(const std::string& path, double depth_scale)
{
    const RawImage raw = read(path);
    if (raw.bit_depth != 16 || raw.channels != 1) {
        throw std::runtime_error("expected 16-bit grayscale depth PNG: " + path);
    }
    DepthImage depth(raw.width, raw.height);
    for (std::size_t i = 0; i < depth.size(); ++i) {
        depth[i] = static_cast<float>(static_cast<double>(raw.samples[i]) / depth_scale);
    }
    return depth;
}

inline void write_mask(const std::string& path, const MaskImage& mask)
{
    std::vector<std::uint16_t> s(mask.begin(), mask.end());
    write(path, mask.width(), mask.height(), 1, 8, s);
}

inline MaskImage read_mask(const std::string& path)
{
    const RawImage raw = read(path);
    if (raw.bit_depth != 8 || raw.channels != 1) {
        throw std::runtime_error("expected 8-bit mask PNG: " + path);
    }
    MaskImage mask(raw.width, raw.height);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = static_cast<std::uint8_t>(raw.samples[i]);
    }
    return mask;
}

} // namespace vgm::png

#endif // VGM_CORE_PNG_IO_HPP
