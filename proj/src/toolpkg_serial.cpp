#include <algorithm>
#include <cmath>

#include "dsa/errors.hpp"
#include "dsa/rng.hpp"
#include "dsa/toolpkg.hpp"

// Plain single-threaded reference kernels. Deliberately written as
// straight-line nested loops with no shared helpers from the OpenMP path;
// the unit tests and bench target compare the two.
namespace dsa::toolpkg::serial {

namespace {

std::uint8_t clamp8(double v) {
    if (v < 0.0) v = 0.0;
    if (v > 255.0) v = 255.0;
    return static_cast<std::uint8_t>(std::lround(v));
}

int clamp_index(int v, int n) {
    if (v < 0) return 0;
    if (v >= n) return n - 1;
    return v;
}

double catmull_rom(double d) {
    d = std::fabs(d);
    if (d <= 1.0) return ((1.5 * d - 2.5) * d) * d + 1.0;
    if (d < 2.0) return ((-0.5 * d + 2.5) * d - 4.0) * d + 2.0;
    return 0.0;
}

}  // namespace

Image crop(const Image& img, const NormalizedBox& box) {
    if (!box.valid()) throw DegenerateCrop("invalid box");
    const int x0 = static_cast<int>(std::floor(box.x1 * img.width + 0.5));
    const int x1 = static_cast<int>(std::floor(box.x2 * img.width + 0.5));
    const int y0 = static_cast<int>(std::floor(box.y1 * img.height + 0.5));
    const int y1 = static_cast<int>(std::floor(box.y2 * img.height + 0.5));
    if (x1 <= x0 || y1 <= y0) throw DegenerateCrop("box rounds to empty rect");
    Image out = Image::make(x1 - x0, y1 - y0, img.channels);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(x - x0, y - y0, c) = img.at(x, y, c);
    return out;
}

Image resize(const Image& img, int w, int h, Interpolation interp) {
    if (w < 1 || h < 1) throw ToolError("resize target must be >= 1x1");
    Image out = Image::make(w, h, img.channels);
    const double xs = static_cast<double>(img.width) / w;
    const double ys = static_cast<double>(img.height) / h;
    for (int y = 0; y < h; ++y) {
        const double sy = (y + 0.5) * ys - 0.5;
        for (int x = 0; x < w; ++x) {
            const double sx = (x + 0.5) * xs - 0.5;
            for (int c = 0; c < img.channels; ++c) {
                double v = 0.0;
                if (interp == Interpolation::Bilinear) {
                    const int ix = static_cast<int>(std::floor(sx));
                    const int iy = static_cast<int>(std::floor(sy));
                    const double fx = sx - ix, fy = sy - iy;
                    const double p00 = img.at(clamp_index(ix, img.width), clamp_index(iy, img.height), c);
                    const double p10 = img.at(clamp_index(ix + 1, img.width), clamp_index(iy, img.height), c);
                    const double p01 = img.at(clamp_index(ix, img.width), clamp_index(iy + 1, img.height), c);
                    const double p11 = img.at(clamp_index(ix + 1, img.width), clamp_index(iy + 1, img.height), c);
                    v = p00 * (1 - fx) * (1 - fy) + p10 * fx * (1 - fy) + p01 * (1 - fx) * fy +
                        p11 * fx * fy;
                } else {
                    const int ix = static_cast<int>(std::floor(sx));
                    const int iy = static_cast<int>(std::floor(sy));
                    for (int ky = -1; ky <= 2; ++ky) {
                        const double wy = catmull_rom(sy - (iy + ky));
                        for (int kx = -1; kx <= 2; ++kx) {
                            const double wx = catmull_rom(sx - (ix + kx));
                            v += wy * wx *
                                 img.at(clamp_index(ix + kx, img.width),
                                        clamp_index(iy + ky, img.height), c);
                        }
                    }
                }
                out.at(x, y, c) = clamp8(v);
            }
        }
    }
    return out;
}

Image convert_color_space(const Image& img, ColorSpace from, ColorSpace to) {
    if (img.channels != 3) throw UnsupportedConversion("color conversion needs 3 channels");
    const bool to_hsv = from == ColorSpace::RGB && to == ColorSpace::HSV;
    const bool from_hsv = from == ColorSpace::HSV && to == ColorSpace::RGB;
    const bool to_lab = from == ColorSpace::RGB && to == ColorSpace::LAB;
    const bool from_lab = from == ColorSpace::LAB && to == ColorSpace::RGB;
    if (!to_hsv && !from_hsv && !to_lab && !from_lab)
        throw UnsupportedConversion("only RGB<->HSV and RGB<->LAB supported");

    Image out = Image::make(img.width, img.height, 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const std::uint8_t* s = &img.data[i * 3];
        std::uint8_t* d = &out.data[i * 3];
        if (to_hsv) {
            const int v = std::max({s[0], s[1], s[2]});
            const int mn = std::min({s[0], s[1], s[2]});
            const int delta = v - mn;
            double hdeg = 0.0;
            if (delta != 0) {
                if (v == s[0]) hdeg = 60.0 * (s[1] - s[2]) / delta;
                else if (v == s[1]) hdeg = 120.0 + 60.0 * (s[2] - s[0]) / delta;
                else hdeg = 240.0 + 60.0 * (s[0] - s[1]) / delta;
                if (hdeg < 0) hdeg += 360.0;
            }
            d[0] = static_cast<std::uint8_t>(std::lround(hdeg / 2.0) % 180);
            d[1] = v == 0 ? 0 : clamp8(255.0 * delta / v);
            d[2] = static_cast<std::uint8_t>(v);
        } else if (from_hsv) {
            const double h = s[0] * 2.0, sat = s[1] / 255.0, val = s[2];
            const double c = val * sat;
            const double hp = h / 60.0;
            const double xv = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
            double r = 0, g = 0, b = 0;
            if (hp < 1) { r = c; g = xv; }
            else if (hp < 2) { r = xv; g = c; }
            else if (hp < 3) { g = c; b = xv; }
            else if (hp < 4) { g = xv; b = c; }
            else if (hp < 5) { r = xv; b = c; }
            else { r = c; b = xv; }
            const double m = val - c;
            d[0] = clamp8(r + m);
            d[1] = clamp8(g + m);
            d[2] = clamp8(b + m);
        } else if (to_lab) {
            auto lin = [](double u) {
                return u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4);
            };
            auto f = [](double t) {
                return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0;
            };
            const double r = lin(s[0] / 255.0), g = lin(s[1] / 255.0), b = lin(s[2] / 255.0);
            const double x = (0.412453 * r + 0.357580 * g + 0.180423 * b) / 0.950456;
            const double y = 0.212671 * r + 0.715160 * g + 0.072169 * b;
            const double z = (0.019334 * r + 0.119193 * g + 0.950227 * b) / 1.088754;
            const double fy = f(y);
            const double L = y > 0.008856 ? 116.0 * fy - 16.0 : 903.3 * y;
            d[0] = clamp8(L * 255.0 / 100.0);
            d[1] = clamp8(500.0 * (f(x) - fy) + 128.0);
            d[2] = clamp8(200.0 * (fy - f(z)) + 128.0);
        } else {
            auto finv = [](double ft) {
                const double t3 = ft * ft * ft;
                return t3 > 0.008856 ? t3 : (ft - 16.0 / 116.0) / 7.787;
            };
            auto unlin = [](double u) {
                return u <= 0.0031308 ? 12.92 * u : 1.055 * std::pow(u, 1.0 / 2.4) - 0.055;
            };
            const double L = s[0] * 100.0 / 255.0, a = s[1] - 128.0, bb = s[2] - 128.0;
            const double fy = (L + 16.0) / 116.0;
            const double y = L > 903.3 * 0.008856 ? fy * fy * fy : L / 903.3;
            const double x = finv(fy + a / 500.0) * 0.950456;
            const double z = finv(fy - bb / 200.0) * 1.088754;
            double rl = 3.240479 * x - 1.537150 * y - 0.498535 * z;
            double gl = -0.969256 * x + 1.875992 * y + 0.041556 * z;
            double bl = 0.055648 * x - 0.204043 * y + 1.057311 * z;
            rl = std::clamp(rl, 0.0, 1.0);
            gl = std::clamp(gl, 0.0, 1.0);
            bl = std::clamp(bl, 0.0, 1.0);
            d[0] = clamp8(unlin(rl) * 255.0);
            d[1] = clamp8(unlin(gl) * 255.0);
            d[2] = clamp8(unlin(bl) * 255.0);
        }
    }
    return out;
}

FloatImage normalize_pixels(const Image& img) {
    FloatImage out = FloatImage::like(img);
    for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] / 255.0;
    return out;
}

FloatImage standardize_pixels(const Image& img) {
    FloatImage out = FloatImage::like(img);
    const std::size_t px = img.pixel_count();
    for (int c = 0; c < img.channels; ++c) {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t i = 0; i < px; ++i) {
            const double v = img.data[i * img.channels + c];
            sum += v;
            sum_sq += v * v;
        }
        const double mean = sum / px;
        const double var = sum_sq / px - mean * mean;
        if (var <= 0.0) throw ZeroVariance("constant channel");
        const double sd = std::sqrt(var);
        for (std::size_t i = 0; i < px; ++i)
            out.data[i * img.channels + c] = (img.data[i * img.channels + c] - mean) / sd;
    }
    return out;
}

Image augment(const Image& img, const AugmentSpec& spec) {
    if (!spec.valid()) throw ToolError("invalid augment spec");
    const int W = img.width, H = img.height, C = img.channels;
    Image out;
    switch (spec.kind) {
        case AugmentSpec::Kind::FlipH:
            out = Image::make(W, H, C);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < C; ++c) out.at(W - 1 - x, y, c) = img.at(x, y, c);
            return out;
        case AugmentSpec::Kind::FlipV:
            out = Image::make(W, H, C);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < C; ++c) out.at(x, H - 1 - y, c) = img.at(x, y, c);
            return out;
        case AugmentSpec::Kind::Rotate:
            out = spec.degrees == 180 ? Image::make(W, H, C) : Image::make(H, W, C);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < C; ++c) {
                        if (spec.degrees == 90) out.at(H - 1 - y, x, c) = img.at(x, y, c);
                        else if (spec.degrees == 180) out.at(W - 1 - x, H - 1 - y, c) = img.at(x, y, c);
                        else out.at(y, W - 1 - x, c) = img.at(x, y, c);
                    }
            return out;
        case AugmentSpec::Kind::GaussianNoise:
            out = Image::make(W, H, C);
            for (std::size_t i = 0; i < img.data.size(); ++i) {
                rng::SplitMix64 g(rng::derive(spec.seed, "noise", static_cast<std::uint64_t>(i)));
                out.data[i] = clamp8(img.data[i] + spec.sigma * rng::gaussian(g));
            }
            return out;
        case AugmentSpec::Kind::PadCrop: {
            const int pw = W + 2 * spec.pad, ph = H + 2 * spec.pad;
            if (spec.crop.x + spec.crop.w > pw || spec.crop.y + spec.crop.h > ph)
                throw ToolError("pad_crop rect outside padded image");
            auto reflect = [](int i, int n) {
                while (i < 0 || i >= n) {
                    if (i < 0) i = -i - 1;
                    if (i >= n) i = 2 * n - 1 - i;
                }
                return i;
            };
            out = Image::make(spec.crop.w, spec.crop.h, C);
            for (int y = 0; y < spec.crop.h; ++y)
                for (int x = 0; x < spec.crop.w; ++x)
                    for (int c = 0; c < C; ++c)
                        out.at(x, y, c) = img.at(reflect(x + spec.crop.x - spec.pad, W),
                                                 reflect(y + spec.crop.y - spec.pad, H), c);
            return out;
        }
    }
    throw ToolError("unreachable augment kind");
}

}  // namespace dsa::toolpkg::serial
