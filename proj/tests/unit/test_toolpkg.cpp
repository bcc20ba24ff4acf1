#include "doctest.h"

#include <cmath>

#include "dsa/errors.hpp"
#include "dsa/toolpkg.hpp"

#include "../support/fixtures.hpp"

using namespace dsa;
using namespace dsa::toolpkg;

namespace {

Image row_image(std::initializer_list<std::uint8_t> vals) {
    Image img = Image::make(static_cast<int>(vals.size()), 1, 1);
    int x = 0;
    for (auto v : vals) img.at(x++, 0, 0) = v;
    return img;
}

}  // namespace

TEST_SUITE_BEGIN("toolpkg");

// --- crop ---------------------------------------------------------------------

TEST_CASE("crop full frame is the identity") {
    const Image img = fixtures::textured_image(17, 11, 1);
    const Image out = crop(img, {0.0, 0.0, 1.0, 1.0});
    CHECK(out.data == img.data);
}

TEST_CASE("crop quadrant of 100x100 gives the 50x50 top-left block") {
    const Image img = fixtures::textured_image(100, 100, 2);
    const Image out = crop(img, {0.0, 0.0, 0.5, 0.5});
    REQUIRE(out.width == 50);
    REQUIRE(out.height == 50);
    for (int y = 0; y < 50; y += 7)
        for (int x = 0; x < 50; x += 7)
            for (int c = 0; c < 3; ++c) CHECK(out.at(x, y, c) == img.at(x, y, c));
}

TEST_CASE("degenerate crops are rejected") {
    const Image img = fixtures::textured_image(100, 100, 3);
    CHECK_THROWS_AS(crop(img, {0.5, 0.5, 0.5001, 0.9}), DegenerateCrop);  // rounds to 0 width
    CHECK_THROWS_AS(crop(img, {0.5, 0.5, 0.4, 0.6}), DegenerateCrop);     // invalid box
}

TEST_CASE("crop composition equals the composed crop") {
    rng::SplitMix64 g(5);
    const Image img = fixtures::textured_image(97, 61, 4);
    for (int trial = 0; trial < 100; ++trial) {
        auto rand_box = [&] {
            const double x1 = g.uniform01() * 0.5;
            const double y1 = g.uniform01() * 0.5;
            const double x2 = x1 + 0.3 + g.uniform01() * (1.0 - x1 - 0.3);
            const double y2 = y1 + 0.3 + g.uniform01() * (1.0 - y1 - 0.3);
            return NormalizedBox{x1, y1, x2, y2};
        };
        const NormalizedBox a = rand_box();
        const NormalizedBox b = rand_box();
        const Image two_step = crop(crop(img, a), b);

        // compose: b is relative to the pixel rect of a
        const int ax0 = static_cast<int>(std::floor(a.x1 * img.width + 0.5));
        const int ax1 = static_cast<int>(std::floor(a.x2 * img.width + 0.5));
        const int ay0 = static_cast<int>(std::floor(a.y1 * img.height + 0.5));
        const int ay1 = static_cast<int>(std::floor(a.y2 * img.height + 0.5));
        const int bx0 = ax0 + static_cast<int>(std::floor(b.x1 * (ax1 - ax0) + 0.5));
        const int bx1 = ax0 + static_cast<int>(std::floor(b.x2 * (ax1 - ax0) + 0.5));
        const int by0 = ay0 + static_cast<int>(std::floor(b.y1 * (ay1 - ay0) + 0.5));
        const int by1 = ay0 + static_cast<int>(std::floor(b.y2 * (ay1 - ay0) + 0.5));
        const NormalizedBox composed{static_cast<double>(bx0) / img.width,
                                     static_cast<double>(by0) / img.height,
                                     static_cast<double>(bx1) / img.width,
                                     static_cast<double>(by1) / img.height};
        const Image one_step = crop(img, composed);
        REQUIRE(one_step.width == two_step.width);
        REQUIRE(one_step.height == two_step.height);
        CHECK(one_step.data == two_step.data);
    }
}

// --- resize -------------------------------------------------------------------

TEST_CASE("constant image stays constant under both interpolations") {
    const Image img = Image::make(2, 2, 1, 137);
    for (auto interp : {Interpolation::Bilinear, Interpolation::Bicubic}) {
        const Image out = resize(img, 4, 4, interp);
        for (auto v : out.data) CHECK(v == 137);
    }
}

TEST_CASE("resize to own size under bilinear is the identity") {
    const Image img = fixtures::textured_image(23, 17, 6);
    CHECK(resize(img, 23, 17, Interpolation::Bilinear).data == img.data);
}

TEST_CASE("1x2 row upsampled to 1x4 follows the half-pixel convention") {
    // src centers at 0,1; dst x maps to (x+0.5)/2-0.5 = -0.25,0.25,0.75,1.25
    // edge-clamped linear interpolation of [0,255]: 0, 63.75, 191.25, 255
    const Image img = row_image({0, 255});
    const Image out = resize(img, 4, 1, Interpolation::Bilinear);
    REQUIRE(out.width == 4);
    CHECK(out.at(0, 0) == 0);
    CHECK(out.at(1, 0) == 64);
    CHECK(out.at(2, 0) == 191);
    CHECK(out.at(3, 0) == 255);
}

TEST_CASE("omp and serial resize agree byte for byte") {
    const Image img = fixtures::textured_image(37, 29, 7);
    for (auto interp : {Interpolation::Bilinear, Interpolation::Bicubic}) {
        const Image a = resize(img, 64, 48, interp);
        const Image b = serial::resize(img, 64, 48, interp);
        CHECK(a.data == b.data);
        const Image c = resize(img, 16, 12, interp);
        const Image d = serial::resize(img, 16, 12, interp);
        CHECK(c.data == d.data);
    }
}

// --- color --------------------------------------------------------------------

TEST_CASE("pure red maps to HSV (0,255,255)") {
    Image img = Image::make(1, 1, 3);
    img.data = {255, 0, 0};
    const Image hsv = convert_color_space(img, ColorSpace::RGB, ColorSpace::HSV);
    CHECK(hsv.data[0] == 0);
    CHECK(hsv.data[1] == 255);
    CHECK(hsv.data[2] == 255);
}

TEST_CASE("achromatic gray has zero saturation") {
    Image img = Image::make(1, 1, 3);
    img.data = {128, 128, 128};
    const Image hsv = convert_color_space(img, ColorSpace::RGB, ColorSpace::HSV);
    CHECK(hsv.data[1] == 0);
    CHECK(hsv.data[2] == 128);
}

TEST_CASE("white maps to LAB L=255 with centered a/b") {
    Image img = Image::make(1, 1, 3);
    img.data = {255, 255, 255};
    const Image lab = convert_color_space(img, ColorSpace::RGB, ColorSpace::LAB);
    CHECK(lab.data[0] == 255);  // L* = 100 scaled
    CHECK(std::abs(int(lab.data[1]) - 128) <= 1);
    CHECK(std::abs(int(lab.data[2]) - 128) <= 1);
}

TEST_CASE("lab round trip is close despite 8-bit quantization") {
    Image img = Image::make(4, 1, 3);
    img.data = {255, 0, 0, 0, 255, 0, 0, 0, 255, 200, 100, 30};
    const Image lab = convert_color_space(img, ColorSpace::RGB, ColorSpace::LAB);
    const Image back = convert_color_space(lab, ColorSpace::LAB, ColorSpace::RGB);
    // a/b quantize to integer steps; saturated colors lose a few levels
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(std::abs(int(back.data[i]) - int(img.data[i])) <= 8);
}

TEST_CASE("unsupported conversions are refused") {
    const Image img = fixtures::textured_image(4, 4, 8);
    CHECK_THROWS_AS(convert_color_space(img, ColorSpace::HSV, ColorSpace::LAB),
                    UnsupportedConversion);
}

TEST_CASE("omp and serial color conversions agree") {
    const Image img = fixtures::textured_image(31, 19, 9);
    for (auto to : {ColorSpace::HSV, ColorSpace::LAB}) {
        const Image a = convert_color_space(img, ColorSpace::RGB, to);
        const Image b = serial::convert_color_space(img, ColorSpace::RGB, to);
        CHECK(a.data == b.data);
        const Image a2 = convert_color_space(a, to, ColorSpace::RGB);
        const Image b2 = serial::convert_color_space(b, to, ColorSpace::RGB);
        CHECK(a2.data == b2.data);
    }
}

// --- normalize / standardize ----------------------------------------------------

TEST_CASE("normalize maps 0,51,255 to exact fractions") {
    const Image img = row_image({0, 51, 255});
    const FloatImage out = normalize_pixels(img);
    CHECK(out.data[0] == 0.0);
    CHECK(out.data[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(out.data[2] == 1.0);
}

TEST_CASE("normalize then x255 round-trips 8-bit values exactly") {
    const Image img = fixtures::textured_image(13, 9, 10);
    const FloatImage f = normalize_pixels(img);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(static_cast<int>(std::lround(f.data[i] * 255.0)) == img.data[i]);
}

TEST_CASE("standardize of a two-pixel channel gives -1,+1") {
    const Image img = row_image({0, 255});
    const FloatImage out = standardize_pixels(img);
    CHECK(out.data[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out.data[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("standardize output has mean 0 and unit variance per channel") {
    const Image img = fixtures::textured_image(40, 30, 11);
    const FloatImage out = standardize_pixels(img);
    const std::size_t px = img.pixel_count();
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < px; ++i) {
            sum += out.data[i * 3 + c];
            sq += out.data[i * 3 + c] * out.data[i * 3 + c];
        }
        const double mean = sum / px;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(sq / px - mean * mean - 1.0) < 1e-9);
    }
}

TEST_CASE("standardizing an already standardized buffer changes nothing") {
    const Image img = fixtures::textured_image(20, 20, 12);
    const FloatImage once = standardize_pixels(img);
    const FloatImage twice = standardize_buffer(once);
    for (std::size_t i = 0; i < once.data.size(); ++i)
        CHECK(std::abs(once.data[i] - twice.data[i]) < 1e-9);
}

TEST_CASE("constant channel raises ZeroVariance") {
    CHECK_THROWS_AS(standardize_pixels(Image::make(4, 4, 1, 7)), ZeroVariance);
}

// --- augment ------------------------------------------------------------------

TEST_CASE("flip twice and rotate four times are identities") {
    const Image img = fixtures::textured_image(19, 13, 13);
    AugmentSpec flip_h{.kind = AugmentSpec::Kind::FlipH};
    AugmentSpec flip_v{.kind = AugmentSpec::Kind::FlipV};
    CHECK(augment(augment(img, flip_h), flip_h).data == img.data);
    CHECK(augment(augment(img, flip_v), flip_v).data == img.data);

    AugmentSpec rot{.kind = AugmentSpec::Kind::Rotate, .degrees = 90};
    Image cur = img;
    for (int i = 0; i < 4; ++i) cur = augment(cur, rot);
    CHECK(cur.data == img.data);
}

TEST_CASE("geometric augments preserve the pixel multiset") {
    const Image img = fixtures::textured_image(10, 14, 14);
    auto histogram = [](const Image& im) {
        std::array<int, 256> h{};
        for (auto v : im.data) ++h[v];
        return h;
    };
    const auto base = histogram(img);
    for (int deg : {90, 180, 270}) {
        AugmentSpec rot{.kind = AugmentSpec::Kind::Rotate, .degrees = deg};
        CHECK(histogram(augment(img, rot)) == base);
    }
    CHECK(histogram(augment(img, {.kind = AugmentSpec::Kind::FlipH})) == base);
}

TEST_CASE("gaussian noise is deterministic per seed and differs across seeds") {
    const Image img = fixtures::textured_image(16, 16, 15);
    AugmentSpec spec;
    spec.kind = AugmentSpec::Kind::GaussianNoise;
    spec.sigma = 5.0;
    spec.seed = 7;
    const Image a = augment(img, spec);
    const Image b = augment(img, spec);
    CHECK(a.data == b.data);
    CHECK(a.data == serial::augment(img, spec).data);
    spec.seed = 8;
    CHECK(augment(img, spec).data != a.data);
}

TEST_CASE("pad then crop round-trips the interior") {
    const Image img = fixtures::textured_image(12, 12, 16);
    AugmentSpec spec;
    spec.kind = AugmentSpec::Kind::PadCrop;
    spec.pad = 3;
    spec.crop = {3, 3, 12, 12};  // the original frame inside the padded image
    CHECK(augment(img, spec).data == img.data);
}

TEST_CASE("color normalization keeps shape and is deterministic") {
    const Image img = fixtures::textured_image(24, 18, 77);
    const Image a = color_normalize(img);
    const Image b = color_normalize(img);
    CHECK(a.width == img.width);
    CHECK(a.height == img.height);
    CHECK(a.channels == 3);
    CHECK(a.data == b.data);
    // a flat image has nothing to normalize
    const Image flat = Image::make(8, 8, 3, 99);
    CHECK(color_normalize(flat).data == flat.data);
}

// --- annotation file validation ---------------------------------------------------

TEST_CASE("yolo validation accepts in-bounds and flags out-of-bounds") {
    fixtures::TempDir tmp;
    const std::vector<std::string> classes(10, "c");

    fixtures::write_text(tmp.path() / "good.txt", "0 0.25 0.25 0.5 0.5\n");
    CHECK(validate_annotation_file(tmp.path() / "good.txt", AnnotationFileFormat::YOLO, 64, 64,
                                   classes)
              .empty());

    fixtures::write_text(tmp.path() / "oob.txt", "0 0.8 0.5 0.5 0.2\n");  // cx+w/2 = 1.05
    const auto v = validate_annotation_file(tmp.path() / "oob.txt", AnnotationFileFormat::YOLO, 64,
                                            64, classes);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "out-of-bounds");

    fixtures::write_text(tmp.path() / "badcls.txt", "12 0.5 0.5 0.2 0.2\n");
    CHECK(!validate_annotation_file(tmp.path() / "badcls.txt", AnnotationFileFormat::YOLO, 64, 64,
                                    classes)
               .empty());
}

TEST_CASE("coco validation flags duplicate annotation ids") {
    fixtures::TempDir tmp;
    const nlohmann::json doc{
        {"images", {{{"id", 1}, {"width", 64}, {"height", 64}, {"file_name", "a.png"}}}},
        {"categories", {{{"id", 1}, {"name", "cat"}}}},
        {"annotations",
         {{{"id", 1}, {"image_id", 1}, {"category_id", 1}, {"bbox", {1.0, 1.0, 5.0, 5.0}}},
          {{"id", 1}, {"image_id", 1}, {"category_id", 1}, {"bbox", {2.0, 2.0, 5.0, 5.0}}}}}};
    fixtures::write_json_file(tmp.path() / "coco.json", doc);
    const auto v = validate_annotation_file(tmp.path() / "coco.json", AnnotationFileFormat::COCO,
                                            64, 64, {"cat"});
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "duplicate-id");
}

TEST_CASE("voc validation accepts a well-formed document") {
    fixtures::TempDir tmp;
    fixtures::make_voc_dataset(tmp.path(), {"cat"}, 1);
    CHECK(validate_annotation_file(tmp.path() / "Annotations" / "voc_000.xml",
                                   AnnotationFileFormat::VOC, 64, 64, {"cat"})
              .empty());
    CHECK(!validate_annotation_file(tmp.path() / "Annotations" / "voc_000.xml",
                                    AnnotationFileFormat::VOC, 16, 16, {"cat"})
               .empty());  // boxes exceed a 16x16 canvas
}

// --- mask validation ---------------------------------------------------------------

TEST_CASE("solid square mask passes all checks") {
    Mask m = Mask::make(10, 10, 0);
    for (int y = 2; y < 8; ++y)
        for (int x = 2; x < 8; ++x) m.at(x, y) = 1;
    CHECK(validate_mask(m, 10, 10).empty());
}

TEST_CASE("small enclosed hole is flagged") {
    Mask m = Mask::make(10, 10, 0);
    for (int y = 1; y < 9; ++y)
        for (int x = 1; x < 9; ++x) m.at(x, y) = 1;
    m.at(4, 4) = 0;
    m.at(5, 4) = 0;
    const auto v = validate_mask(m, 10, 10);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "hole");
}

TEST_CASE("dimension mismatch is flagged before anything else") {
    const Mask m = Mask::make(10, 10, 1);
    const auto v = validate_mask(m, 12, 12);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "dims");
}

TEST_CASE("a sprayed mask is flagged as jagged") {
    // checkerboard: every foreground pixel is boundary, 800 px vs 2*(40+40)
    Mask m = Mask::make(40, 40, 0);
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x)
            if ((x + y) % 2 == 0) m.at(x, y) = 1;
    bool jagged = false;
    for (const auto& v : validate_mask(m, 40, 40))
        if (v.rule == "jagged-boundary") jagged = true;
    CHECK(jagged);
}

// --- plans -------------------------------------------------------------------------

TEST_CASE("plans referencing unknown ops fail validation") {
    ToolPlan plan;
    plan.steps.push_back({"sharpen_ai", nlohmann::json::object(), ""});
    CHECK(!validate_plan(plan).empty());
    CHECK_THROWS_AS(apply_plan(Image::make(4, 4, 1), plan), ToolError);
}

TEST_CASE("apply_plan chains crop and resize") {
    const Image img = fixtures::textured_image(100, 100, 17);
    ToolPlan plan;
    plan.steps.push_back({"crop", {{"box", {0.0, 0.0, 0.5, 0.5}}}, ""});
    plan.steps.push_back({"resize", {{"width", 32}, {"height", 32}, {"interp", "bilinear"}}, ""});
    const Image out = apply_plan(img, plan);
    CHECK(out.width == 32);
    CHECK(out.height == 32);
    const Image expect = resize(crop(img, {0.0, 0.0, 0.5, 0.5}), 32, 32, Interpolation::Bilinear);
    CHECK(out.data == expect.data);
}

TEST_CASE("apply_plan runs registered color space conversions") {
    const Image img = fixtures::textured_image(8, 8, 18);
    ToolPlan plan;
    plan.steps.push_back({"convert_color_space", {{"from", "rgb"}, {"to", "lab"}}, ""});
    plan.steps.push_back({"convert_color_space", {{"from", "lab"}, {"to", "rgb"}}, ""});
    const Image out = apply_plan(img, plan);
    const Image expect = convert_color_space(
        convert_color_space(img, ColorSpace::RGB, ColorSpace::LAB), ColorSpace::LAB,
        ColorSpace::RGB);
    CHECK(out.data == expect.data);
}

TEST_SUITE_END();
