#include "dsa/toolpkg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dsa/errors.hpp"
#include "dsa/parallel.hpp"
#include "dsa/rng.hpp"

namespace dsa::toolpkg {

namespace {

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

inline std::uint8_t to_u8(double v) {
    v = std::clamp(v, 0.0, 255.0);
    return static_cast<std::uint8_t>(std::lround(v));
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Catmull-Rom weight, a = -0.5
inline double cubic_weight(double d) {
    d = std::fabs(d);
    if (d <= 1.0) return 1.5 * d * d * d - 2.5 * d * d + 1.0;
    if (d < 2.0) return -0.5 * d * d * d + 2.5 * d * d - 4.0 * d + 2.0;
    return 0.0;
}

}  // namespace

bool AugmentSpec::valid() const {
    switch (kind) {
        case Kind::Rotate:
            return degrees == 90 || degrees == 180 || degrees == 270;
        case Kind::FlipH:
        case Kind::FlipV:
            return true;
        case Kind::GaussianNoise:
            return sigma > 0.0;
        case Kind::PadCrop:
            return pad >= 0 && crop.w >= 1 && crop.h >= 1 && crop.x >= 0 && crop.y >= 0;
    }
    return false;
}

// ---------------------------------------------------------------------------
// crop / resize
// ---------------------------------------------------------------------------

Image crop(const Image& img, const NormalizedBox& box) {
    if (!box.valid()) throw DegenerateCrop("invalid box");
    const int x0 = round_half_up(box.x1 * img.width);
    const int x1 = round_half_up(box.x2 * img.width);
    const int y0 = round_half_up(box.y1 * img.height);
    const int y1 = round_half_up(box.y2 * img.height);
    if (x1 <= x0 || y1 <= y0) throw DegenerateCrop("box rounds to empty rect");
    Image out = Image::make(x1 - x0, y1 - y0, img.channels);
    const std::size_t row_bytes = static_cast<std::size_t>(out.width) * img.channels;
    parallel_for(out.height, [&](std::int64_t y) {
        const std::uint8_t* src =
            &img.data[((static_cast<std::size_t>(y) + y0) * img.width + x0) * img.channels];
        std::copy(src, src + row_bytes,
                  &out.data[static_cast<std::size_t>(y) * row_bytes]);
    });
    return out;
}

Image resize(const Image& img, int w, int h, Interpolation interp) {
    if (w < 1 || h < 1) throw ToolError("resize target must be >= 1x1");
    Image out = Image::make(w, h, img.channels);
    const double sx_scale = static_cast<double>(img.width) / w;
    const double sy_scale = static_cast<double>(img.height) / h;
    const int C = img.channels;

    if (interp == Interpolation::Bilinear) {
        parallel_for(h, [&](std::int64_t y) {
            const double sy = (y + 0.5) * sy_scale - 0.5;
            const int y0 = static_cast<int>(std::floor(sy));
            const double fy = sy - y0;
            const int ya = clampi(y0, 0, img.height - 1);
            const int yb = clampi(y0 + 1, 0, img.height - 1);
            for (int x = 0; x < w; ++x) {
                const double sx = (x + 0.5) * sx_scale - 0.5;
                const int x0 = static_cast<int>(std::floor(sx));
                const double fx = sx - x0;
                const int xa = clampi(x0, 0, img.width - 1);
                const int xb = clampi(x0 + 1, 0, img.width - 1);
                for (int c = 0; c < C; ++c) {
                    const double v = (1 - fx) * (1 - fy) * img.at(xa, ya, c) +
                                     fx * (1 - fy) * img.at(xb, ya, c) +
                                     (1 - fx) * fy * img.at(xa, yb, c) +
                                     fx * fy * img.at(xb, yb, c);
                    out.at(static_cast<int>(x), static_cast<int>(y), c) = to_u8(v);
                }
            }
        });
        return out;
    }

    parallel_for(h, [&](std::int64_t y) {
        const double sy = (y + 0.5) * sy_scale - 0.5;
        const int iy = static_cast<int>(std::floor(sy));
        double wy[4];
        for (int k = 0; k < 4; ++k) wy[k] = cubic_weight(sy - (iy - 1 + k));
        for (int x = 0; x < w; ++x) {
            const double sx = (x + 0.5) * sx_scale - 0.5;
            const int ix = static_cast<int>(std::floor(sx));
            double wx[4];
            for (int k = 0; k < 4; ++k) wx[k] = cubic_weight(sx - (ix - 1 + k));
            for (int c = 0; c < C; ++c) {
                double v = 0.0;
                for (int ky = 0; ky < 4; ++ky) {
                    const int yy = clampi(iy - 1 + ky, 0, img.height - 1);
                    double row = 0.0;
                    for (int kx = 0; kx < 4; ++kx) {
                        const int xx = clampi(ix - 1 + kx, 0, img.width - 1);
                        row += wx[kx] * img.at(xx, yy, c);
                    }
                    v += wy[ky] * row;
                }
                out.at(x, static_cast<int>(y), c) = to_u8(v);
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// color spaces
// ---------------------------------------------------------------------------

namespace {

void rgb_to_hsv_px(std::uint8_t r, std::uint8_t g, std::uint8_t b, std::uint8_t* out) {
    const int v = std::max({r, g, b});
    const int mn = std::min({r, g, b});
    const int delta = v - mn;
    double h = 0.0;
    if (delta != 0) {
        if (v == r)
            h = 60.0 * (g - b) / delta;
        else if (v == g)
            h = 120.0 + 60.0 * (b - r) / delta;
        else
            h = 240.0 + 60.0 * (r - g) / delta;
        if (h < 0) h += 360.0;
    }
    out[0] = static_cast<std::uint8_t>(std::lround(h / 2.0) % 180);
    out[1] = v == 0 ? 0 : to_u8(255.0 * delta / v);
    out[2] = static_cast<std::uint8_t>(v);
}

void hsv_to_rgb_px(std::uint8_t h8, std::uint8_t s8, std::uint8_t v8, std::uint8_t* out) {
    const double h = h8 * 2.0;
    const double s = s8 / 255.0;
    const double v = v8;
    const double c = v * s;
    const double hp = h / 60.0;
    const double xv = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = xv; }
    else if (hp < 2) { r = xv; g = c; }
    else if (hp < 3) { g = c; b = xv; }
    else if (hp < 4) { g = xv; b = c; }
    else if (hp < 5) { r = xv; b = c; }
    else { r = c; b = xv; }
    const double m = v - c;
    out[0] = to_u8(r + m);
    out[1] = to_u8(g + m);
    out[2] = to_u8(b + m);
}

inline double srgb_to_linear(double u) {
    return u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4);
}
inline double linear_to_srgb(double u) {
    return u <= 0.0031308 ? 12.92 * u : 1.055 * std::pow(u, 1.0 / 2.4) - 0.055;
}
inline double lab_f(double t) {
    return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0;
}
inline double lab_f_inv(double ft) {
    const double t3 = ft * ft * ft;
    return t3 > 0.008856 ? t3 : (ft - 16.0 / 116.0) / 7.787;
}

constexpr double kXn = 0.950456, kZn = 1.088754;

void rgb_to_lab_px(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8, std::uint8_t* out) {
    const double r = srgb_to_linear(r8 / 255.0);
    const double g = srgb_to_linear(g8 / 255.0);
    const double b = srgb_to_linear(b8 / 255.0);
    const double x = (0.412453 * r + 0.357580 * g + 0.180423 * b) / kXn;
    const double y = 0.212671 * r + 0.715160 * g + 0.072169 * b;
    const double z = (0.019334 * r + 0.119193 * g + 0.950227 * b) / kZn;
    const double fy = lab_f(y);
    const double L = y > 0.008856 ? 116.0 * fy - 16.0 : 903.3 * y;
    const double a = 500.0 * (lab_f(x) - fy);
    const double bb = 200.0 * (fy - lab_f(z));
    out[0] = to_u8(L * 255.0 / 100.0);
    out[1] = to_u8(a + 128.0);
    out[2] = to_u8(bb + 128.0);
}

void lab_to_rgb_px(std::uint8_t L8, std::uint8_t a8, std::uint8_t b8, std::uint8_t* out) {
    const double L = L8 * 100.0 / 255.0;
    const double a = a8 - 128.0;
    const double bb = b8 - 128.0;
    const double fy = (L + 16.0) / 116.0;
    const double y = L > 903.3 * 0.008856 ? fy * fy * fy : L / 903.3;
    const double x = lab_f_inv(fy + a / 500.0) * kXn;
    const double z = lab_f_inv(fy - bb / 200.0) * kZn;
    const double rl = 3.240479 * x - 1.537150 * y - 0.498535 * z;
    const double gl = -0.969256 * x + 1.875992 * y + 0.041556 * z;
    const double bl = 0.055648 * x - 0.204043 * y + 1.057311 * z;
    out[0] = to_u8(linear_to_srgb(std::clamp(rl, 0.0, 1.0)) * 255.0);
    out[1] = to_u8(linear_to_srgb(std::clamp(gl, 0.0, 1.0)) * 255.0);
    out[2] = to_u8(linear_to_srgb(std::clamp(bl, 0.0, 1.0)) * 255.0);
}

}  // namespace

Image convert_color_space(const Image& img, ColorSpace from, ColorSpace to) {
    if (img.channels != 3) throw UnsupportedConversion("color conversion needs 3 channels");
    using CS = ColorSpace;
    void (*px)(std::uint8_t, std::uint8_t, std::uint8_t, std::uint8_t*) = nullptr;
    if (from == CS::RGB && to == CS::HSV) px = rgb_to_hsv_px;
    else if (from == CS::HSV && to == CS::RGB) px = hsv_to_rgb_px;
    else if (from == CS::RGB && to == CS::LAB) px = rgb_to_lab_px;
    else if (from == CS::LAB && to == CS::RGB) px = lab_to_rgb_px;
    else throw UnsupportedConversion("only RGB<->HSV and RGB<->LAB supported");

    Image out = Image::make(img.width, img.height, 3);
    parallel_for(static_cast<std::int64_t>(img.pixel_count()), [&](std::int64_t i) {
        const std::uint8_t* s = &img.data[static_cast<std::size_t>(i) * 3];
        px(s[0], s[1], s[2], &out.data[static_cast<std::size_t>(i) * 3]);
    });
    return out;
}

// ---------------------------------------------------------------------------
// normalize / standardize
// ---------------------------------------------------------------------------

FloatImage normalize_pixels(const Image& img) {
    FloatImage out = FloatImage::like(img);
    parallel_for(static_cast<std::int64_t>(img.data.size()),
                 [&](std::int64_t i) { out.data[i] = img.data[i] / 255.0; });
    return out;
}

namespace {

FloatImage standardize_impl(const FloatImage& in) {
    FloatImage out = in;
    const std::size_t px = static_cast<std::size_t>(in.width) * in.height;
    for (int c = 0; c < in.channels; ++c) {
        const auto [mean, var] = chunked_moments(
            px, [&](std::size_t i) { return in.data[i * in.channels + c]; });
        if (var <= 0.0) throw ZeroVariance("constant channel");
        const double inv = 1.0 / std::sqrt(var);
        parallel_for(static_cast<std::int64_t>(px), [&, m = mean](std::int64_t i) {
            const std::size_t k = static_cast<std::size_t>(i) * in.channels + c;
            out.data[k] = (in.data[k] - m) * inv;
        });
    }
    return out;
}

}  // namespace

FloatImage standardize_pixels(const Image& img) {
    FloatImage f = FloatImage::like(img);
    for (std::size_t i = 0; i < img.data.size(); ++i) f.data[i] = img.data[i];
    return standardize_impl(f);
}

FloatImage standardize_buffer(const FloatImage& buf) { return standardize_impl(buf); }

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

namespace {

Image rotate_exact(const Image& img, int degrees) {
    const int W = img.width, H = img.height, C = img.channels;
    Image out = degrees == 180 ? Image::make(W, H, C) : Image::make(H, W, C);
    parallel_for(H, [&](std::int64_t y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < C; ++c) {
                const std::uint8_t v = img.at(x, static_cast<int>(y), c);
                if (degrees == 90)  // clockwise
                    out.at(H - 1 - static_cast<int>(y), x, c) = v;
                else if (degrees == 180)
                    out.at(W - 1 - x, H - 1 - static_cast<int>(y), c) = v;
                else
                    out.at(static_cast<int>(y), W - 1 - x, c) = v;
            }
        }
    });
    return out;
}

// symmetric reflection (edge included)
inline int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

}  // namespace

Image augment(const Image& img, const AugmentSpec& spec) {
    if (!spec.valid()) throw ToolError("invalid augment spec");
    const int W = img.width, H = img.height, C = img.channels;
    switch (spec.kind) {
        case AugmentSpec::Kind::FlipH: {
            Image out = Image::make(W, H, C);
            parallel_for(H, [&](std::int64_t y) {
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < C; ++c)
                        out.at(W - 1 - x, static_cast<int>(y), c) = img.at(x, static_cast<int>(y), c);
            });
            return out;
        }
        case AugmentSpec::Kind::FlipV: {
            Image out = Image::make(W, H, C);
            parallel_for(H, [&](std::int64_t y) {
                for (int x = 0; x < W; ++x)
                    for (int c = 0; c < C; ++c)
                        out.at(x, H - 1 - static_cast<int>(y), c) = img.at(x, static_cast<int>(y), c);
            });
            return out;
        }
        case AugmentSpec::Kind::Rotate:
            return rotate_exact(img, spec.degrees);
        case AugmentSpec::Kind::GaussianNoise: {
            Image out = Image::make(W, H, C);
            // one fresh generator per sample keyed by (seed, index): identical
            // output regardless of scheduling
            parallel_for(static_cast<std::int64_t>(img.data.size()), [&](std::int64_t i) {
                rng::SplitMix64 g(rng::derive(spec.seed, "noise", static_cast<std::uint64_t>(i)));
                const double n = rng::gaussian(g);
                out.data[i] = to_u8(img.data[i] + spec.sigma * n);
            });
            return out;
        }
        case AugmentSpec::Kind::PadCrop: {
            const int pw = W + 2 * spec.pad, ph = H + 2 * spec.pad;
            if (spec.crop.x + spec.crop.w > pw || spec.crop.y + spec.crop.h > ph)
                throw ToolError("pad_crop rect outside padded image");
            Image out = Image::make(spec.crop.w, spec.crop.h, C);
            parallel_for(spec.crop.h, [&](std::int64_t y) {
                const int sy = reflect_index(static_cast<int>(y) + spec.crop.y - spec.pad, H);
                for (int x = 0; x < spec.crop.w; ++x) {
                    const int sx = reflect_index(x + spec.crop.x - spec.pad, W);
                    for (int c = 0; c < C; ++c)
                        out.at(x, static_cast<int>(y), c) = img.at(sx, sy, c);
                }
            });
            return out;
        }
    }
    throw ToolError("unreachable augment kind");
}

Image color_normalize(const Image& img) {
    if (img.channels != 3) {
        // gray path: plain standardize scaled back around 128
        FloatImage st = standardize_pixels(img);
        Image out = Image::make(img.width, img.height, 1);
        parallel_for(static_cast<std::int64_t>(st.data.size()),
                     [&](std::int64_t i) { out.data[i] = to_u8(128.0 + 32.0 * st.data[i]); });
        return out;
    }
    // per-channel standardize in LAB, re-embedded around mid-scale, back-convert
    Image lab = convert_color_space(img, ColorSpace::RGB, ColorSpace::LAB);
    const std::size_t px = img.pixel_count();
    for (int c = 0; c < 3; ++c) {
        const auto [mean, var] =
            chunked_moments(px, [&](std::size_t i) { return double(lab.data[i * 3 + c]); });
        if (var <= 0.0) continue;  // flat channel, nothing to normalize
        const double inv = 1.0 / std::sqrt(var);
        parallel_for(static_cast<std::int64_t>(px), [&, m = mean](std::int64_t i) {
            const std::size_t k = static_cast<std::size_t>(i) * 3 + c;
            lab.data[k] = to_u8(128.0 + 32.0 * ((lab.data[k] - m) * inv));
        });
    }
    return convert_color_space(lab, ColorSpace::LAB, ColorSpace::RGB);
}

// ---------------------------------------------------------------------------
// annotation file validation
// ---------------------------------------------------------------------------

namespace {

std::vector<Violation> validate_yolo_file(std::istream& in, int, int,
                                          const std::vector<std::string>& classes) {
    std::vector<Violation> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        long cls = -1;
        double cx, cy, w, h;
        if (!(ls >> cls >> cx >> cy >> w >> h)) {
            out.push_back({"line " + std::to_string(lineno), "unparsable"});
            continue;
        }
        std::string extra;
        if (ls >> extra) out.push_back({"line " + std::to_string(lineno), "trailing tokens"});
        if (cls < 0 || static_cast<std::size_t>(cls) >= classes.size())
            out.push_back({"line " + std::to_string(lineno), "class id out of range"});
        if (w <= 0 || h <= 0)
            out.push_back({"line " + std::to_string(lineno), "non-positive size"});
        const double eps = 1e-9;
        if (cx - w / 2 < -eps || cx + w / 2 > 1 + eps || cy - h / 2 < -eps || cy + h / 2 > 1 + eps)
            out.push_back({"line " + std::to_string(lineno), "out-of-bounds"});
    }
    return out;
}

std::string xml_tag_value(const std::string& xml, const std::string& tag, std::size_t from,
                          std::size_t to, std::size_t* pos_out = nullptr) {
    const std::string open = "<" + tag + ">";
    const std::string close = "</" + tag + ">";
    const std::size_t a = xml.find(open, from);
    if (a == std::string::npos || a >= to) return {};
    const std::size_t b = xml.find(close, a + open.size());
    if (b == std::string::npos || b > to) return {};
    if (pos_out) *pos_out = b + close.size();
    return xml.substr(a + open.size(), b - a - open.size());
}

std::vector<Violation> validate_voc_file(const std::string& xml, int image_w, int image_h,
                                         const std::vector<std::string>& classes) {
    std::vector<Violation> out;
    if (xml.find("<annotation") == std::string::npos) {
        out.push_back({"root", "not a VOC annotation document"});
        return out;
    }
    std::size_t pos = 0;
    int idx = 0;
    while (true) {
        const std::size_t a = xml.find("<object>", pos);
        if (a == std::string::npos) break;
        const std::size_t b = xml.find("</object>", a);
        if (b == std::string::npos) {
            out.push_back({"object " + std::to_string(idx), "unclosed element"});
            break;
        }
        const std::string name = xml_tag_value(xml, "name", a, b);
        if (std::find(classes.begin(), classes.end(), name) == classes.end())
            out.push_back({"object " + std::to_string(idx), "unknown class: " + name});
        const std::string sx1 = xml_tag_value(xml, "xmin", a, b);
        const std::string sy1 = xml_tag_value(xml, "ymin", a, b);
        const std::string sx2 = xml_tag_value(xml, "xmax", a, b);
        const std::string sy2 = xml_tag_value(xml, "ymax", a, b);
        try {
            const int x1 = std::stoi(sx1), y1 = std::stoi(sy1);
            const int x2 = std::stoi(sx2), y2 = std::stoi(sy2);
            if (x1 < 1 || y1 < 1 || x2 > image_w || y2 > image_h || x1 > x2 || y1 > y2)
                out.push_back({"object " + std::to_string(idx), "out-of-bounds"});
        } catch (const std::exception&) {
            out.push_back({"object " + std::to_string(idx), "unparsable bndbox"});
        }
        pos = b + 9;
        ++idx;
    }
    return out;
}

std::vector<Violation> validate_coco_file(const std::string& text, int image_w, int image_h,
                                          const std::vector<std::string>& classes) {
    std::vector<Violation> out;
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        out.push_back({"root", "not a JSON object"});
        return out;
    }
    if (!doc.contains("images") || !doc.contains("annotations") || !doc.contains("categories")) {
        out.push_back({"root", "missing images/annotations/categories"});
        return out;
    }
    std::map<long, std::pair<int, int>> image_dims;
    for (const auto& im : doc["images"]) {
        image_dims[im.value("id", -1L)] = {im.value("width", image_w), im.value("height", image_h)};
    }
    std::set<long> cat_ids;
    for (const auto& cat : doc["categories"]) {
        cat_ids.insert(cat.value("id", -1L));
        const std::string name = cat.value("name", "");
        if (std::find(classes.begin(), classes.end(), name) == classes.end())
            out.push_back({"categories", "unknown class: " + name});
    }
    std::set<long> ann_ids;
    for (const auto& ann : doc["annotations"]) {
        const long id = ann.value("id", -1L);
        if (!ann_ids.insert(id).second)
            out.push_back({"annotation " + std::to_string(id), "duplicate-id"});
        if (!cat_ids.count(ann.value("category_id", -1L)))
            out.push_back({"annotation " + std::to_string(id), "unknown category_id"});
        const long img_id = ann.value("image_id", -1L);
        auto it = image_dims.find(img_id);
        if (it == image_dims.end()) {
            out.push_back({"annotation " + std::to_string(id), "unknown image_id"});
            continue;
        }
        if (ann.contains("bbox") && ann["bbox"].is_array() && ann["bbox"].size() == 4) {
            const double x = ann["bbox"][0], y = ann["bbox"][1];
            const double w = ann["bbox"][2], h = ann["bbox"][3];
            if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > it->second.first + 1e-6 ||
                y + h > it->second.second + 1e-6)
                out.push_back({"annotation " + std::to_string(id), "out-of-bounds"});
        }
    }
    return out;
}

}  // namespace

std::vector<Violation> validate_annotation_file(const std::filesystem::path& path,
                                                AnnotationFileFormat format, int image_w,
                                                int image_h,
                                                const std::vector<std::string>& classes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("unreadable annotation file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    switch (format) {
        case AnnotationFileFormat::YOLO: {
            std::istringstream ss(text);
            return validate_yolo_file(ss, image_w, image_h, classes);
        }
        case AnnotationFileFormat::VOC:
            return validate_voc_file(text, image_w, image_h, classes);
        case AnnotationFileFormat::COCO:
            return validate_coco_file(text, image_w, image_h, classes);
    }
    return {};
}

// ---------------------------------------------------------------------------
// mask validation
// ---------------------------------------------------------------------------

std::vector<Violation> validate_mask(const Mask& mask, int image_w, int image_h,
                                     const MaskCheckOptions& opt) {
    std::vector<Violation> out;
    if (mask.width != image_w || mask.height != image_h) {
        out.push_back({"mask", "dims"});
        return out;
    }
    const int W = mask.width, H = mask.height;

    // holes: background components not touching the border, enclosed by a
    // single class, with area below hole_max
    std::vector<int> comp(static_cast<std::size_t>(W) * H, -1);
    int n_comp = 0;
    std::vector<std::size_t> stack;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * W + x;
            if (mask.labels[i] != 0 || comp[i] != -1) continue;
            const int id = n_comp++;
            bool touches_border = false;
            std::size_t area = 0;
            std::set<std::uint32_t> neighbors;
            stack.push_back(i);
            comp[i] = id;
            while (!stack.empty()) {
                const std::size_t cur = stack.back();
                stack.pop_back();
                ++area;
                const int cx = static_cast<int>(cur % W), cy = static_cast<int>(cur / W);
                if (cx == 0 || cy == 0 || cx == W - 1 || cy == H - 1) touches_border = true;
                const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int nx = cx + dx[k], ny = cy + dy[k];
                    if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                    const std::size_t ni = static_cast<std::size_t>(ny) * W + nx;
                    if (mask.labels[ni] == 0) {
                        if (comp[ni] == -1) {
                            comp[ni] = id;
                            stack.push_back(ni);
                        }
                    } else {
                        neighbors.insert(mask.labels[ni]);
                    }
                }
            }
            if (!touches_border && neighbors.size() == 1 && area < opt.hole_max)
                out.push_back({"mask", "hole"});
        }
    }

    // jaggedness per class region
    std::map<std::uint32_t, std::array<int, 4>> bbox;  // class -> x0,y0,x1,y1
    std::map<std::uint32_t, std::size_t> boundary;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::uint32_t v = mask.at(x, y);
            if (v == 0) continue;
            auto [it, fresh] = bbox.try_emplace(v, std::array<int, 4>{x, y, x, y});
            if (!fresh) {
                it->second[0] = std::min(it->second[0], x);
                it->second[1] = std::min(it->second[1], y);
                it->second[2] = std::max(it->second[2], x);
                it->second[3] = std::max(it->second[3], y);
            }
            const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
            bool is_boundary = false;
            for (int k = 0; k < 4 && !is_boundary; ++k) {
                const int nx = x + dx[k], ny = y + dy[k];
                if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;  // image edge is not jagged
                if (mask.at(nx, ny) != v) is_boundary = true;
            }
            if (is_boundary) ++boundary[v];
        }
    }
    for (const auto& [cls, bb] : bbox) {
        const int bw = bb[2] - bb[0] + 1, bh = bb[3] - bb[1] + 1;
        const double ratio = static_cast<double>(boundary[cls]) / (2.0 * (bw + bh));
        if (ratio > opt.jag_ratio)
            out.push_back({"class " + std::to_string(cls), "jagged-boundary"});
    }
    return out;
}

// ---------------------------------------------------------------------------
// registry / plans
// ---------------------------------------------------------------------------

const std::set<std::string>& tool_registry() {
    static const std::set<std::string> reg = {
        "crop",   "resize",         "color_normalize", "convert_color_space",
        "flip_h", "flip_v",         "rotate",          "gaussian_noise",
        "pad_crop", "normalize",    "standardize",
    };
    return reg;
}

std::vector<Violation> validate_plan(const ToolPlan& plan) {
    std::vector<Violation> out;
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        if (!tool_registry().count(plan.steps[i].op))
            out.push_back({"step " + std::to_string(i), "unknown op: " + plan.steps[i].op});
    }
    return out;
}

Image apply_plan(const Image& img, const ToolPlan& plan) {
    const auto violations = validate_plan(plan);
    if (!violations.empty())
        throw ToolError("plan references unknown op: " + violations.front().rule);
    Image cur = img;
    for (const auto& step : plan.steps) {
        const auto& p = step.params;
        if (step.op == "crop") {
            NormalizedBox b{p.at("box")[0], p.at("box")[1], p.at("box")[2], p.at("box")[3]};
            cur = crop(cur, b);
        } else if (step.op == "resize") {
            const auto interp = p.value("interp", "bilinear") == std::string("bicubic")
                                    ? Interpolation::Bicubic
                                    : Interpolation::Bilinear;
            cur = resize(cur, p.at("width"), p.at("height"), interp);
        } else if (step.op == "color_normalize") {
            cur = color_normalize(cur);
        } else if (step.op == "convert_color_space") {
            auto space = [](const std::string& s) {
                if (s == "rgb") return ColorSpace::RGB;
                if (s == "hsv") return ColorSpace::HSV;
                if (s == "lab") return ColorSpace::LAB;
                throw ToolError("unknown color space: " + s);
            };
            cur = convert_color_space(cur, space(p.value("from", "rgb")),
                                      space(p.value("to", "hsv")));
        } else if (step.op == "flip_h") {
            cur = augment(cur, {.kind = AugmentSpec::Kind::FlipH});
        } else if (step.op == "flip_v") {
            cur = augment(cur, {.kind = AugmentSpec::Kind::FlipV});
        } else if (step.op == "rotate") {
            AugmentSpec s;
            s.kind = AugmentSpec::Kind::Rotate;
            s.degrees = p.at("degrees");
            cur = augment(cur, s);
        } else if (step.op == "gaussian_noise") {
            AugmentSpec s;
            s.kind = AugmentSpec::Kind::GaussianNoise;
            s.sigma = p.at("sigma");
            s.seed = p.value("seed", 0ULL);
            cur = augment(cur, s);
        } else if (step.op == "pad_crop") {
            AugmentSpec s;
            s.kind = AugmentSpec::Kind::PadCrop;
            s.pad = p.at("pad");
            s.crop = {p.at("rect")[0], p.at("rect")[1], p.at("rect")[2], p.at("rect")[3]};
            cur = augment(cur, s);
        } else {
            throw ToolError("op does not produce an image: " + step.op);
        }
    }
    return cur;
}

}  // namespace dsa::toolpkg
