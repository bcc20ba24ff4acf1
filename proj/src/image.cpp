#include "dsa/image.hpp"

namespace dsa {

std::size_t Mask::area() const {
    std::size_t n = 0;
    for (std::uint32_t v : labels)
        if (v != 0) ++n;
    return n;
}

std::vector<double> to_gray_luma(const Image& img) {
    std::vector<double> out(img.pixel_count());
    if (img.channels == 1) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.data[i];
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::uint8_t* p = &img.data[i * 3];
        out[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
    return out;
}

}  // namespace dsa
