#pragma once

#include <cstdint>
#include <vector>

#include "dsa/errors.hpp"

namespace dsa {

// 8-bit interleaved pixel buffer, row-major. channels is 1 (gray) or 3 (RGB).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    static Image make(int w, int h, int c, std::uint8_t fill = 0) {
        Image img;
        img.width = w;
        img.height = h;
        img.channels = c;
        img.data.assign(static_cast<std::size_t>(w) * h * c, fill);
        return img;
    }

    std::uint8_t& at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool empty() const { return data.empty(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_dims(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool valid() const {
        return width >= 1 && height >= 1 && (channels == 1 || channels == 3) &&
               data.size() == static_cast<std::size_t>(width) * height * channels;
    }
};

// Real-valued buffer produced by normalize/standardize kernels.
struct FloatImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    static FloatImage like(const Image& img) {
        FloatImage f;
        f.width = img.width;
        f.height = img.height;
        f.channels = img.channels;
        f.data.assign(img.data.size(), 0.0);
        return f;
    }
};

// Label map used for semantic masks, binary masks and panoptic ids.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> labels;

    static Mask make(int w, int h, std::uint32_t fill = 0) {
        Mask m;
        m.width = w;
        m.height = h;
        m.labels.assign(static_cast<std::size_t>(w) * h, fill);
        return m;
    }
    std::uint32_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::uint32_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    bool same_dims(const Mask& o) const { return width == o.width && height == o.height; }
    std::size_t area() const;  // count of nonzero labels
};

// BT.601 luma of an RGB (or gray) image as doubles in [0,255].
std::vector<double> to_gray_luma(const Image& img);

}  // namespace dsa
