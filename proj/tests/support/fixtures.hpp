#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsa/geometry.hpp"
#include "dsa/image.hpp"
#include "dsa/image_io.hpp"
#include "dsa/rle.hpp"
#include "dsa/rng.hpp"

// Shared fixture machinery: temp directories, synthetic images, and mock
// corpora whose sidecar documents drive the deterministic backends.
namespace fixtures {

namespace fs = std::filesystem;
using nlohmann::json;

class TempDir {
public:
    explicit TempDir(const std::string& tag = "dsa_test") {
        static std::atomic<unsigned> counter{0};
        path_ = fs::temp_directory_path() /
                (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline void write_json_file(const fs::path& p, const json& doc) { write_text(p, doc.dump(2)); }

// deterministic "photo": smooth gradients + seeded texture
inline dsa::Image textured_image(int w, int h, std::uint64_t seed, int channels = 3) {
    dsa::Image img = dsa::Image::make(w, h, channels);
    dsa::rng::SplitMix64 g(seed);
    const int base_r = static_cast<int>(g.below(156)) + 50;
    const int base_g = static_cast<int>(g.below(156)) + 50;
    const int base_b = static_cast<int>(g.below(156)) + 50;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            dsa::rng::SplitMix64 px(seed ^ (static_cast<std::uint64_t>(y) * w + x) * 0x9e37ULL);
            const int n = static_cast<int>(px.below(31)) - 15;
            auto clamp8 = [](int v) { return static_cast<std::uint8_t>(v < 0 ? 0 : v > 255 ? 255 : v); };
            if (channels == 1) {
                img.at(x, y, 0) = clamp8(base_r + (x * 90) / w + n);
            } else {
                img.at(x, y, 0) = clamp8(base_r + (x * 90) / w + n);
                img.at(x, y, 1) = clamp8(base_g + (y * 90) / h + n);
                img.at(x, y, 2) = clamp8(base_b + ((x + y) * 45) / (w + h) + n);
            }
        }
    }
    return img;
}

// canonical analysis document; callers override fields afterwards as needed
inline json make_analysis(const std::string& category, int w, int h, double similarity,
                          double total_risk, bool qualified, double confidence,
                          const std::string& image_id = "img") {
    char res[32];
    std::snprintf(res, sizeof(res), "%dx%d", w, h);
    return json{
        {"image_id", image_id},
        {"target_category", category},
        {"instance_count", 1},
        {"fine_grained_attributes", json::object()},
        {"background_composition",
         {{"scene_type", "plain"}, {"background_distribution", json::object()}}},
        {"viewpoint_conditions",
         {{"camera_angle", "frontal"},
          {"camera_elevation", "eye-level"},
          {"lighting", "daylight"},
          {"light_direction_vector", {0.1, -0.2}},
          {"depth", "subject in focus"}}},
        {"image_quality",
         {{"resolution", res},
          {"sharpness_score", 0.9},
          {"color_fidelity", "high"},
          {"detail_completeness", 95.0},
          {"style_consistency", "natural"},
          {"jpeg_artifacts", false}}},
        {"semantic_alignment",
         {{"class_prototype", category},
          {"similarity_score", similarity},
          {"match_features", json::array({"shape", "texture"})},
          {"alignment_vector_diff", {{"shape", 0.02}}}}},
        {"quality_risks",
         {{"occlusion_detected", false},
          {"occlusion_level", 0.0},
          {"blur_score", 0.05},
          {"exposure_abnormality", false},
          {"viewpoint_deviation_score", 0.05},
          {"noise_level", "low"},
          {"warnings", json::array()},
          {"total_risk_score", total_risk}}},
        {"decision",
         {{"qualified", qualified},
          {"confidence", confidence},
          {"reason", qualified ? "meets criteria" : "below criteria"}}},
    };
}

// the canonical fox example used across the analysis tests
inline json fox_analysis() {
    json a = make_analysis("Fox", 1024, 768, 0.931, 0.07, true, 0.982, "wild_fox_03821");
    a["image_quality"]["sharpness_score"] = 0.94;
    a["image_quality"]["detail_completeness"] = 98.7;
    a["fine_grained_attributes"] = json{
        {"pose", "crouching, head turned to left"},
        {"pose_bounding_box", {0.22, 0.35, 0.75, 0.65}},
        {"fur_detail", "visible winter coat pattern"},
        {"fur_region", {0.25, 0.4, 0.7, 0.6}},
        {"facial_features",
         {{"snout_shape", "sharp and narrow"},
          {"eye_color", "dark amber"},
          {"ear_shape", "pointed with black tips"},
          {"facial_region", {0.6, 0.38, 0.72, 0.48}}}},
        {"tail_detail",
         {{"appearance", "fluffy, white-tipped"}, {"tail_region", {0.3, 0.55, 0.6, 0.72}}}},
    };
    a["background_composition"]["scene_type"] = "forest floor and leaf litter";
    a["background_composition"]["background_distribution"] = json{
        {"vegetation_area", {0.05, 0.6, 0.3, 0.95}},
        {"ground_area", {0.0, 0.75, 1.0, 1.0}},
    };
    a["semantic_alignment"]["alignment_vector_diff"] = json{{"fur_texture", 0.02},
                                                            {"tail_geometry", 0.03},
                                                            {"facial_features", 0.01},
                                                            {"pose_alignment", 0.04}};
    a["quality_risks"]["blur_score"] = 0.06;
    a["quality_risks"]["viewpoint_deviation_score"] = 0.08;
    return a;
}

struct CorpusOptions {
    int image_size = 48;
    int good_per_class = 5;     // qualifying images per class
    int bad_per_class = 0;      // low-similarity images per class
    int corrupt_files = 0;      // undecodable entries
    bool small_object = false;  // attribute region small enough to trigger a crop
};

// class-dir corpus with per-image sidecars; returns the corpus root
inline fs::path make_classification_corpus(const fs::path& root,
                                           const std::vector<std::string>& classes,
                                           const CorpusOptions& opt = {}) {
    std::uint64_t seed = 1000;
    for (const auto& cls : classes) {
        const fs::path dir = root / cls;
        fs::create_directories(dir);
        for (int j = 0; j < opt.good_per_class + opt.bad_per_class; ++j) {
            const bool good = j < opt.good_per_class;
            char name[64];
            std::snprintf(name, sizeof(name), "img_%03d.png", j);
            const fs::path file = dir / name;
            dsa::save_png(file, textured_image(opt.image_size, opt.image_size, seed++));
            json a = make_analysis(cls, opt.image_size, opt.image_size, good ? 0.92 : 0.2,
                                   good ? 0.05 : 0.2, good, good ? 0.95 : 0.3,
                                   cls + "_" + std::to_string(j));
            if (opt.small_object && good)
                a["fine_grained_attributes"] =
                    json{{"body", "compact"}, {"body_region", {0.3, 0.3, 0.55, 0.55}}};
            write_json_file(fs::path(file.string() + ".json"), json{{"analysis", a}});
        }
    }
    for (int c = 0; c < opt.corrupt_files; ++c) {
        // lands inside the first class directory, mid-sequence lexicographically
        const fs::path bad =
            root / classes.front() / ("img_corrupt_" + std::to_string(c) + ".jpg");
        write_text(bad, "not really a jpeg at all");
    }
    return root;
}

struct DetectionObject {
    std::string cls;
    dsa::NormalizedBox box;
    double confidence;
};

// flat-dir detection corpus; sidecars carry detections (+optional refined
// re-query entries) and instance masks for segmentation runs
inline fs::path make_detection_corpus(const fs::path& root,
                                      const std::vector<std::string>& classes, int per_class,
                                      int image_size = 64, bool with_masks = false,
                                      double occlusion_every_other = 0.4) {
    fs::create_directories(root);
    std::uint64_t seed = 7000;
    int counter = 0;
    for (const auto& cls : classes) {
        for (int j = 0; j < per_class; ++j, ++counter) {
            char name[64];
            std::snprintf(name, sizeof(name), "det_%03d.png", counter);
            const fs::path file = root / name;
            dsa::save_png(file, textured_image(image_size, image_size, seed++));

            json a = make_analysis(cls, image_size, image_size, 0.9, 0.05, true, 0.93,
                                   "det_" + std::to_string(counter));
            if (j % 2 == 1) a["quality_risks"]["occlusion_level"] = occlusion_every_other;

            const dsa::NormalizedBox b1{0.125, 0.125, 0.5, 0.5};
            const dsa::NormalizedBox b2{0.5625, 0.5625, 0.9375, 0.9375};
            json dets = json::array();
            dets.push_back({{"class", cls}, {"box", {b1.x1, b1.y1, b1.x2, b1.y2}}, {"confidence", 0.9}});
            // exactly at the 0.5 gate: must be kept (inclusive)
            dets.push_back({{"class", cls}, {"box", {b2.x1, b2.y1, b2.x2, b2.y2}}, {"confidence", 0.5}});

            json sidecar{{"analysis", a}, {"detections", dets}};
            if (with_masks) {
                dsa::Mask m1 = dsa::Mask::make(image_size, image_size, 0);
                dsa::Mask m2 = dsa::Mask::make(image_size, image_size, 0);
                for (int y = image_size / 8; y < image_size / 2; ++y)
                    for (int x = image_size / 8; x < image_size / 2; ++x) m1.at(x, y) = 1;
                for (int y = 9 * image_size / 16; y < 15 * image_size / 16; ++y)
                    for (int x = 9 * image_size / 16; x < 15 * image_size / 16; ++x) m2.at(x, y) = 1;
                sidecar["masks"] = json::array(
                    {{{"class", cls}, {"instance", 1}, {"confidence", 0.9}, {"rle", dsa::rle_encode(m1)}},
                     {{"class", cls}, {"instance", 2}, {"confidence", 0.8}, {"rle", dsa::rle_encode(m2)}}});
            }
            write_json_file(fs::path(file.string() + ".json"), sidecar);
        }
    }
    return root;
}

// classification tree without sidecars standing in for an existing dataset
inline fs::path make_classdir_dataset(const fs::path& root,
                                      const std::vector<std::string>& classes, int per_class,
                                      int image_size = 32) {
    std::uint64_t seed = 4000;
    for (const auto& cls : classes) {
        fs::create_directories(root / cls);
        for (int j = 0; j < per_class; ++j) {
            char name[64];
            std::snprintf(name, sizeof(name), "orig_%03d.png", j);
            dsa::save_png(root / cls / name, textured_image(image_size, image_size, seed++));
        }
    }
    return root;
}

inline fs::path make_voc_dataset(const fs::path& root, const std::vector<std::string>& classes,
                                 int images, int image_size = 64) {
    fs::create_directories(root / "JPEGImages");
    fs::create_directories(root / "Annotations");
    std::uint64_t seed = 5000;
    for (int i = 0; i < images; ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "voc_%03d", i);
        dsa::save_png(root / "JPEGImages" / (std::string(name) + ".png"),
                      textured_image(image_size, image_size, seed++));
        const std::string& cls = classes[i % classes.size()];
        std::string xml = "<annotation>\n  <filename>" + std::string(name) +
                          ".png</filename>\n  <size>\n    <width>" + std::to_string(image_size) +
                          "</width>\n    <height>" + std::to_string(image_size) +
                          "</height>\n    <depth>3</depth>\n  </size>\n  <object>\n    <name>" +
                          cls +
                          "</name>\n    <bndbox>\n      <xmin>4</xmin>\n      <ymin>4</ymin>\n "
                          "     <xmax>32</xmax>\n      <ymax>32</ymax>\n    </bndbox>\n  "
                          "</object>\n</annotation>\n";
        write_text(root / "Annotations" / (std::string(name) + ".xml"), xml);
    }
    return root;
}

}  // namespace fixtures
