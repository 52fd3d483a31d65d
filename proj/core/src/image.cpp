#include "cobsplat/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "cobsplat/error.hpp"

namespace cobsplat {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Decodes any 8/16-bit PNG into 8-bit rows with `channels` components.
std::vector<uint8_t> read_png_rows(const std::filesystem::path& path, int& width,
                                   int& height, int channels) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw ParseError("cannot open PNG: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw ParseError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw ParseError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("malformed PNG: " + path.string());
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const png_byte color_type = png_get_color_type(png, info);
    const png_byte bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (channels == 3) {
        if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        png_set_strip_alpha(png);
    } else {
        if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
            color_type == PNG_COLOR_TYPE_PALETTE)
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);

    std::vector<uint8_t> rows(static_cast<size_t>(width) * height * channels);
    std::vector<png_bytep> row_ptrs(height);
    for (int r = 0; r < height; ++r)
        row_ptrs[r] = rows.data() + static_cast<size_t>(r) * width * channels;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return rows;
}

void write_png_rows(const std::filesystem::path& path, const std::vector<uint8_t>& rows,
                    int width, int height, int channels) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw ValidationError("cannot write PNG: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw ValidationError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw ValidationError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ValidationError("PNG write failed: " + path.string());
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_bytep> row_ptrs(height);
    for (int r = 0; r < height; ++r)
        row_ptrs[r] = const_cast<png_bytep>(rows.data() + static_cast<size_t>(r) * width * channels);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

uint8_t to_byte(double v) {
    return static_cast<uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

} // namespace

Image load_png(const std::filesystem::path& path) {
    int w = 0, h = 0;
    const auto rows = read_png_rows(path, w, h, 3);
    Image img(w, h, 3);
    for (size_t i = 0; i < rows.size(); ++i) img.data[i] = rows[i] / 255.0;
    return img;
}

Mask load_mask_png(const std::filesystem::path& path) {
    int w = 0, h = 0;
    const auto rows = read_png_rows(path, w, h, 1);
    Mask mask(w, h);
    for (size_t i = 0; i < rows.size(); ++i) mask.data[i] = rows[i] >= 128 ? 1 : 0;
    return mask;
}

void save_png(const Image& img, const std::filesystem::path& path) {
    if (img.channels != 3) throw ValidationError("save_png expects a 3-channel image");
    std::vector<uint8_t> rows(img.data.size());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = to_byte(img.data[i]);
    write_png_rows(path, rows, img.width, img.height, 3);
}

void save_mask_png(const Mask& mask, const std::filesystem::path& path) {
    std::vector<uint8_t> rows(mask.data.size());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = mask.data[i] ? 255 : 0;
    write_png_rows(path, rows, mask.width, mask.height, 1);
}

void save_gray_png(const std::vector<double>& plane, int width, int height,
                   const std::filesystem::path& path) {
    if (plane.size() != static_cast<size_t>(width) * height)
        throw ValidationError("save_gray_png: plane size does not match dimensions");
    std::vector<uint8_t> rows(plane.size());
    for (size_t i = 0; i < rows.size(); ++i) rows[i] = to_byte(plane[i]);
    write_png_rows(path, rows, width, height, 1);
}

} // namespace cobsplat
