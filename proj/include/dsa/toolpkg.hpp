#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsa/geometry.hpp"
#include "dsa/image.hpp"
#include "dsa/violation.hpp"

// Deterministic image-processing and validation kernels. Default entry points
// are OpenMP-parallel; dsa::toolpkg::serial keeps plain reference versions for
// testing and for the kernel benchmark. Both paths share the conventions
// pinned here:
//   - resize uses half-pixel centers; bicubic is Catmull-Rom (a = -0.5) with
//     edge clamping; channel values clamp to [0,255], round half away from 0
//   - crop rects round half-up to the pixel grid, half-open [x0,x1)
//   - HSV is the 8-bit hexcone encoding (H in [0,179] = degrees/2)
//   - LAB is sRGB -> XYZ(D65) -> CIELAB, L scaled to [0,255], a/b offset +128
namespace dsa::toolpkg {

enum class Interpolation { Bilinear, Bicubic };
enum class ColorSpace { RGB, HSV, LAB };

struct PixelRect {
    int x = 0, y = 0, w = 0, h = 0;
};

struct AugmentSpec {
    enum class Kind { Rotate, FlipH, FlipV, GaussianNoise, PadCrop };
    Kind kind = Kind::FlipH;
    int degrees = 90;           // Rotate: 90/180/270
    double sigma = 0.0;         // GaussianNoise
    std::uint64_t seed = 0;     // stochastic kinds
    int pad = 0;                // PadCrop: reflect padding in px
    PixelRect crop;             // PadCrop: rect inside the padded image
    bool valid() const;
};

using Violation = dsa::Violation;

// --- kernels (OpenMP paths) -------------------------------------------------
Image crop(const Image& img, const NormalizedBox& box);
Image resize(const Image& img, int w, int h, Interpolation interp);
Image convert_color_space(const Image& img, ColorSpace from, ColorSpace to);
FloatImage normalize_pixels(const Image& img);
FloatImage standardize_pixels(const Image& img);
FloatImage standardize_buffer(const FloatImage& buf);
Image augment(const Image& img, const AugmentSpec& spec);
// standardize L in LAB then convert back; the "color normalization" tool
Image color_normalize(const Image& img);

namespace serial {
Image crop(const Image& img, const NormalizedBox& box);
Image resize(const Image& img, int w, int h, Interpolation interp);
Image convert_color_space(const Image& img, ColorSpace from, ColorSpace to);
FloatImage normalize_pixels(const Image& img);
FloatImage standardize_pixels(const Image& img);
Image augment(const Image& img, const AugmentSpec& spec);
}  // namespace serial

// --- validators ---------------------------------------------------------------
enum class AnnotationFileFormat { YOLO, VOC, COCO };

std::vector<Violation> validate_annotation_file(const std::filesystem::path& path,
                                                AnnotationFileFormat format, int image_w,
                                                int image_h,
                                                const std::vector<std::string>& classes);

struct MaskCheckOptions {
    std::size_t hole_max = 16;  // enclosed background area below this flags a hole
    double jag_ratio = 4.0;     // boundary px / (2*(bbox_w+bbox_h)) above this flags jaggedness
};

std::vector<Violation> validate_mask(const Mask& mask, int image_w, int image_h,
                                     const MaskCheckOptions& opt = {});

// --- tool registry / plans ---------------------------------------------------
struct ToolStep {
    std::string op;             // registry id
    nlohmann::json params;
    std::string justification;
};

struct ToolPlan {
    std::vector<ToolStep> steps;
};

const std::set<std::string>& tool_registry();
std::vector<Violation> validate_plan(const ToolPlan& plan);
Image apply_plan(const Image& img, const ToolPlan& plan);

}  // namespace dsa::toolpkg
