#pragma once

#include <algorithm>
#include <cmath>

namespace dsa {

// Axis-aligned box with corner coordinates as fractions of image dimensions.
struct NormalizedBox {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    bool valid() const {
        return 0.0 <= x1 && x1 < x2 && x2 <= 1.0 && 0.0 <= y1 && y1 < y2 && y2 <= 1.0;
    }
    double area() const { return (x2 - x1) * (y2 - y1); }
    bool operator==(const NormalizedBox&) const = default;
};

inline double iou(const NormalizedBox& a, const NormalizedBox& b) {
    const double ix1 = std::max(a.x1, b.x1);
    const double iy1 = std::max(a.y1, b.y1);
    const double ix2 = std::min(a.x2, b.x2);
    const double iy2 = std::min(a.y2, b.y2);
    const double iw = std::max(0.0, ix2 - ix1);
    const double ih = std::max(0.0, iy2 - iy1);
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

inline NormalizedBox union_box(const NormalizedBox& a, const NormalizedBox& b) {
    return {std::min(a.x1, b.x1), std::min(a.y1, b.y1),
            std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

// Grow a box by `pad` (fraction of the frame) on every side, clamped to [0,1].
inline NormalizedBox pad_box(const NormalizedBox& b, double pad) {
    return {std::max(0.0, b.x1 - pad), std::max(0.0, b.y1 - pad),
            std::min(1.0, b.x2 + pad), std::min(1.0, b.y2 + pad)};
}

struct NormalizedPoint {
    double x = 0.0, y = 0.0;
    bool valid() const { return 0.0 <= x && x <= 1.0 && 0.0 <= y && y <= 1.0; }
};

}  // namespace dsa
