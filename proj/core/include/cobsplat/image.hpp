#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cobsplat {

// Row-major H x W x C raster with values nominally in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    double& at(int row, int col, int ch) {
        return data[(static_cast<size_t>(row) * width + col) * channels + ch];
    }
    double at(int row, int col, int ch) const {
        return data[(static_cast<size_t>(row) * width + col) * channels + ch];
    }
    size_t size() const { return data.size(); }
};

// Binary mask, one byte per pixel, values in {0, 1}.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    Mask() = default;
    Mask(int w, int h, uint8_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    uint8_t& at(int row, int col) { return data[static_cast<size_t>(row) * width + col]; }
    uint8_t at(int row, int col) const { return data[static_cast<size_t>(row) * width + col]; }
    // Number of foreground pixels.
    long count() const {
        long n = 0;
        for (uint8_t v : data) n += v;
        return n;
    }
};

// 8-bit PNG I/O. Images linearize to [0, 1] by /255; masks threshold at >= 128.
Image load_png(const std::filesystem::path& path);
Mask load_mask_png(const std::filesystem::path& path);
void save_png(const Image& img, const std::filesystem::path& path);
void save_mask_png(const Mask& mask, const std::filesystem::path& path);
// Grayscale export of a [0,1] plane as round(255*v).
void save_gray_png(const std::vector<double>& plane, int width, int height,
                   const std::filesystem::path& path);

} // namespace cobsplat
