#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsa/analysis.hpp"
#include "dsa/gateway.hpp"
#include "dsa/intake.hpp"

// Turns accepted images into dataset entries: class assignment, detection
// boxes, masks; enforces the confidence gate; emits every output format.
namespace dsa::labeling {

using gateway::Detection;
using gateway::SegmentationResult;

// per-pixel (class, instance), encoded id = class_id * 1000 + instance
struct PanopticMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> ids;
    static std::uint32_t encode(std::uint32_t class_id, std::uint32_t instance) {
        return class_id * 1000 + instance;
    }
};

enum class SegVariant { Semantic, Instance, Panoptic };

struct AnnotationSet {
    std::string image_id;
    std::optional<std::string> class_label;
    std::vector<Detection> detections;
    std::optional<SegmentationResult> masks;   // instance bitmasks
    std::optional<Mask> semantic_map;          // class index map, 0 = background
    std::optional<PanopticMap> panoptic;
    bool flagged = false;
    std::string flag_reason;

    bool has_payload() const {
        return class_label || !detections.empty() || masks || semantic_map || panoptic;
    }
};

std::string assign_class_label(const analysis::ImageAnalysis& a, const intake::DatasetSpec& spec);

std::vector<Detection> filter_by_confidence(const std::vector<Detection>& detections,
                                            double threshold);
std::vector<Detection> dedupe_detections(std::vector<Detection> detections, double iou_threshold);

struct AnnotateOptions {
    double dedupe_iou = 0.9;
    double requery_low = 0.3;  // [requery_low, min_confidence) triggers one box re-query
};

AnnotationSet annotate_detection(const acquisition::ImageRecord& image,
                                 const intake::DatasetSpec& spec, const gateway::Gateway& gw,
                                 const AnnotateOptions& opt = {});

AnnotationSet annotate_segmentation(const acquisition::ImageRecord& image,
                                    const intake::DatasetSpec& spec, const gateway::Gateway& gw,
                                    SegVariant variant);

// --- emitters (pure; files are written by the caller) -------------------------

std::map<std::string, int> class_index_map(const intake::DatasetSpec& spec);  // 0-based

std::string emit_yolo(const AnnotationSet& ann, int image_w, int image_h,
                      const std::map<std::string, int>& class_idx);
std::vector<Detection> parse_yolo(const std::string& text, const std::vector<std::string>& classes);

struct VocObject {
    std::string name;
    int xmin = 1, ymin = 1, xmax = 1, ymax = 1;  // 1-based inclusive pixels
};
struct VocDoc {
    std::string filename;
    int width = 0, height = 0, depth = 3;
    std::vector<VocObject> objects;
};

VocDoc voc_doc_from(const AnnotationSet& ann, const std::string& filename, int image_w,
                    int image_h, int depth = 3);
std::string emit_voc(const VocDoc& doc);
VocDoc parse_voc(const std::string& xml);
NormalizedBox voc_box_to_normalized(const VocObject& o, int image_w, int image_h);

struct CocoImageMeta {
    std::string file_name;
    int width = 0;
    int height = 0;
};

nlohmann::json emit_coco(const std::vector<std::pair<CocoImageMeta, AnnotationSet>>& entries,
                         const intake::DatasetSpec& spec);

// mask PNG payloads keyed by relative file name
std::vector<std::array<std::uint8_t, 3>> default_palette(std::size_t n_classes);
std::map<std::string, std::vector<std::uint8_t>> emit_masks(
    const AnnotationSet& ann, const std::vector<std::array<std::uint8_t, 3>>& palette);

Mask decode_semantic_mask(const std::vector<std::uint8_t>& png_bytes);
PanopticMap decode_panoptic_mask(const std::vector<std::uint8_t>& png_bytes);

nlohmann::json annotation_to_json(const AnnotationSet& ann);
AnnotationSet annotation_from_json(const nlohmann::json& doc);

}  // namespace dsa::labeling
