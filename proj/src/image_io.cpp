// SPDX-License-Identifier: Apache-2.0
#include "diffmatte/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace diffmatte {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

struct PngImage {
    int width = 0, height = 0;
    int bit_depth = 0, color_type = 0;
    std::vector<std::vector<png_byte>> rows;
};

PngImage read_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open image: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("malformed PNG: " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    PngImage img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.bit_depth = png_get_bit_depth(png, info);
    img.color_type = png_get_color_type(png, info);

    const size_t rowbytes = png_get_rowbytes(png, info);
    img.rows.assign(img.height, std::vector<png_byte>(rowbytes));
    std::vector<png_bytep> ptrs(img.height);
    for (int y = 0; y < img.height; y++) ptrs[y] = img.rows[y].data();
    png_read_image(png, ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, int width, int height, int bit_depth, int color_type,
               const std::vector<std::vector<png_byte>>& rows) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open image for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG write failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> ptrs(height);
    for (int y = 0; y < height; y++)
        ptrs[y] = const_cast<png_bytep>(rows[y].data());
    png_write_image(png, ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray16(const std::string& path, const Tensor& map01) {
    if (map01.c != 1) throw std::invalid_argument("write_png_gray16: need single channel");
    std::vector<std::vector<png_byte>> rows(map01.h, std::vector<png_byte>(map01.w * 2));
    for (int y = 0; y < map01.h; y++)
        for (int x = 0; x < map01.w; x++) {
            const double v = std::min(1.0, std::max(0.0, static_cast<double>(map01.at(0, y, x))));
            const uint16_t q = static_cast<uint16_t>(std::lround(v * 65535.0));
            rows[y][2 * x] = static_cast<png_byte>(q >> 8);  // network byte order
            rows[y][2 * x + 1] = static_cast<png_byte>(q & 0xFF);
        }
    write_png(path, map01.w, map01.h, 16, PNG_COLOR_TYPE_GRAY, rows);
}

Tensor read_png_gray16_raw(const std::string& path) {
    PngImage img = read_png(path);
    if (img.color_type != PNG_COLOR_TYPE_GRAY || img.bit_depth != 16)
        throw std::runtime_error("expected 16-bit grayscale PNG: " + path);
    Tensor t(1, img.height, img.width);
    for (int y = 0; y < img.height; y++)
        for (int x = 0; x < img.width; x++) {
            const uint16_t q = static_cast<uint16_t>((img.rows[y][2 * x] << 8) |
                                                     img.rows[y][2 * x + 1]);
            t.at(0, y, x) = static_cast<float>(q);
        }
    return t;
}

Tensor read_png_gray16(const std::string& path) {
    Tensor raw = read_png_gray16_raw(path);
    for (auto& v : raw.v) v = static_cast<float>(v / 65535.0);
    return raw;
}

void write_png_rgb8(const std::string& path, const Tensor& rgb01) {
    if (rgb01.c != 3) throw std::invalid_argument("write_png_rgb8: need three channels");
    std::vector<std::vector<png_byte>> rows(rgb01.h, std::vector<png_byte>(rgb01.w * 3));
    for (int y = 0; y < rgb01.h; y++)
        for (int x = 0; x < rgb01.w; x++)
            for (int ci = 0; ci < 3; ci++) {
                const double v =
                    std::min(1.0, std::max(0.0, static_cast<double>(rgb01.at(ci, y, x))));
                rows[y][3 * x + ci] = static_cast<png_byte>(std::lround(v * 255.0));
            }
    write_png(path, rgb01.w, rgb01.h, 8, PNG_COLOR_TYPE_RGB, rows);
}

Tensor read_png_rgb8(const std::string& path) {
    PngImage img = read_png(path);
    if (img.color_type != PNG_COLOR_TYPE_RGB || img.bit_depth != 8)
        throw std::runtime_error("expected 8-bit RGB PNG: " + path);
    Tensor t(3, img.height, img.width);
    for (int y = 0; y < img.height; y++)
        for (int x = 0; x < img.width; x++)
            for (int ci = 0; ci < 3; ci++)
                t.at(ci, y, x) = static_cast<float>(img.rows[y][3 * x + ci] / 255.0);
    return t;
}

}  // namespace diffmatte
