// 8-bit image container, PNG codec (libpng), bilinear resize and the 64-bit
// average hash used for deduplication.
#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "synthaug/tensor.hpp"

namespace synthaug {

class ImageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Image8 {
    std::size_t height = 0, width = 0, channels = 0;  // channels is 1 or 3
    std::vector<std::uint8_t> pixels;                  // row-major h x w x c

    Image8() = default;
    Image8(std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill = 0)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {
        if (c != 1 && c != 3) throw ImageError("channel count must be 1 or 3");
    }

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
        return pixels[(y * width + x) * channels + c];
    }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
};

// -- PNG ---------------------------------------------------------------------

inline Image8 load_png(const std::string& path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!fp) throw ImageError("cannot open image file: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw ImageError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageError("corrupt PNG file: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    // normalize everything to 8-bit gray or rgb
    png_set_strip_16(png);
    png_set_packing(png);
    const png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const std::size_t h = png_get_image_height(png, info);
    const std::size_t w = png_get_image_width(png, info);
    const std::size_t c = png_get_channels(png, info);
    if (c != 1 && c != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageError(path + ": unsupported channel count after decoding");
    }

    Image8 img(h, w, c);
    std::vector<png_bytep> rows(h);
    for (std::size_t y = 0; y < h; ++y) rows[y] = img.pixels.data() + y * w * c;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void save_png(const std::string& path, const Image8& img) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw ImageError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ImageError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_const_bytep> rows(img.height);
    for (std::size_t y = 0; y < img.height; ++y)
        rows[y] = img.pixels.data() + y * img.width * img.channels;
    png_write_rows(png, const_cast<png_bytepp>(rows.data()), png_uint_32(img.height));
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

// -- resampling ----------------------------------------------------------------

// bilinear, pixel-center convention: src = (dst + 0.5) * scale - 0.5
inline std::vector<float> resize_bilinear(const std::vector<float>& src, std::size_t sh, std::size_t sw,
                                          std::size_t channels, std::size_t dh, std::size_t dw) {
    std::vector<float> dst(dh * dw * channels);
    const double sy = double(sh) / double(dh);
    const double sx = double(sw) / double(dw);
    for (std::size_t y = 0; y < dh; ++y) {
        double fy = (double(y) + 0.5) * sy - 0.5;
        if (fy < 0) fy = 0;
        std::size_t y0 = std::size_t(fy);
        if (y0 > sh - 1) y0 = sh - 1;
        std::size_t y1 = std::min(y0 + 1, sh - 1);
        const double wy = fy - double(y0);
        for (std::size_t x = 0; x < dw; ++x) {
            double fx = (double(x) + 0.5) * sx - 0.5;
            if (fx < 0) fx = 0;
            std::size_t x0 = std::size_t(fx);
            if (x0 > sw - 1) x0 = sw - 1;
            std::size_t x1 = std::min(x0 + 1, sw - 1);
            const double wx = fx - double(x0);
            for (std::size_t c = 0; c < channels; ++c) {
                const double v00 = src[(y0 * sw + x0) * channels + c];
                const double v01 = src[(y0 * sw + x1) * channels + c];
                const double v10 = src[(y1 * sw + x0) * channels + c];
                const double v11 = src[(y1 * sw + x1) * channels + c];
                const double top = v00 + (v01 - v00) * wx;
                const double bot = v10 + (v11 - v10) * wx;
                dst[(y * dw + x) * channels + c] = float(top + (bot - top) * wy);
            }
        }
    }
    return dst;
}

inline std::vector<float> to_gray_f(const Image8& img) {
    std::vector<float> gray(img.height * img.width);
    if (img.channels == 1) {
        for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = float(img.pixels[i]);
    } else {
        for (std::size_t i = 0; i < gray.size(); ++i) {
            const float r = img.pixels[i * 3 + 0];
            const float g = img.pixels[i * 3 + 1];
            const float b = img.pixels[i * 3 + 2];
            gray[i] = 0.299f * r + 0.587f * g + 0.114f * b;
        }
    }
    return gray;
}

// -- average hash --------------------------------------------------------------

// 64-bit fingerprint: grayscale, bilinear 8x8 downsample, threshold at the
// mean. Bits are row-major with pixel (0,0) in the most significant bit.
inline std::uint64_t average_hash(const Image8& img) {
    const std::vector<float> gray = to_gray_f(img);
    const std::vector<float> small = resize_bilinear(gray, img.height, img.width, 1, 8, 8);
    double mean = 0;
    for (float v : small) mean += v;
    mean /= 64.0;
    std::uint64_t hash = 0;
    for (std::size_t i = 0; i < 64; ++i)
        if (double(small[i]) > mean) hash |= (std::uint64_t(1) << (63 - i));
    return hash;
}

inline int hamming_distance(std::uint64_t a, std::uint64_t b) {
    return int(__builtin_popcountll(a ^ b));
}

}  // namespace synthaug
