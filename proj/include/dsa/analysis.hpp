#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsa/geometry.hpp"
#include "dsa/image.hpp"
#include "dsa/intake.hpp"
#include "dsa/toolpkg.hpp"

// Per-image structured analysis: parsing/validation of the canonical
// analysis document (published as schemas/image_analysis.schema.json),
// alignment scoring, risk assessment, the accept/reject gate, and the
// deterministic optimization planner.
namespace dsa::analysis {

struct RegionAttribute {
    std::string name;
    std::string value;
    std::optional<NormalizedBox> region;
    bool operator==(const RegionAttribute&) const = default;
};

struct ImageAnalysis {
    std::string image_id;
    std::string target_category;
    int instance_count = 1;
    std::vector<RegionAttribute> attributes;  // flattened fine_grained_attributes

    struct Background {
        std::string scene_type;
        std::vector<std::pair<std::string, NormalizedBox>> regions;
        bool operator==(const Background&) const = default;
    } background;

    struct Viewpoint {
        std::string camera_angle;
        std::string camera_elevation;
        std::string lighting;
        std::array<double, 2> light_direction{0.0, 0.0};
        std::string depth;
        bool operator==(const Viewpoint&) const = default;
    } viewpoint;

    struct Quality {
        int width = 0;
        int height = 0;
        double sharpness_score = 0.0;
        std::string color_fidelity = "high";
        double detail_completeness = 100.0;  // percent
        std::string style_consistency;
        bool jpeg_artifacts = false;
        bool operator==(const Quality&) const = default;
    } quality;

    struct Alignment {
        std::string class_prototype;
        double similarity_score = 0.0;
        std::vector<std::string> match_features;
        std::map<std::string, double> vector_diff;
        bool operator==(const Alignment&) const = default;
    } alignment;

    struct Risks {
        bool occlusion_detected = false;
        double occlusion_level = 0.0;
        double blur_score = 0.0;
        bool exposure_abnormality = false;
        double viewpoint_deviation_score = 0.0;
        std::string noise_level = "low";
        std::vector<std::string> warnings;
        std::optional<double> total_risk_score;
        bool operator==(const Risks&) const = default;
    } risks;

    struct DecisionField {
        bool qualified = false;
        double confidence = 0.0;
        std::string reason;
        bool operator==(const DecisionField&) const = default;
    } decision;

    nlohmann::json extras = nlohmann::json::object();  // unknown fields, preserved

    bool operator==(const ImageAnalysis&) const = default;
};

ImageAnalysis parse_analysis(const std::string& raw);
ImageAnalysis parse_analysis(const nlohmann::json& doc);
nlohmann::json serialize_analysis(const ImageAnalysis& a);

// flags an analysis whose claimed resolution disagrees with the pixel buffer
std::optional<Violation> check_resolution(const ImageAnalysis& a, const Image& img);

double score_alignment(const ImageAnalysis& a, const intake::DatasetSpec& spec);
double assess_risk(const ImageAnalysis& a);

struct Decision {
    bool accept = false;
    double confidence = 0.0;
    std::string reason;
};

// Gates in fixed order (alignment, risk, resolution); the reason names the
// first failing gate. `alignment` lets callers pass the spec-matched
// score_alignment value; otherwise the analysis' own similarity is used.
Decision decide(const ImageAnalysis& a, const intake::QualityConstraints& qc,
                std::optional<double> alignment = std::nullopt);

struct PlanOptions {
    double crop_pad = 0.05;            // fraction of frame added around the object union
    double crop_area_threshold = 0.4;  // crop when object union covers less than this
    toolpkg::Interpolation resize_interp = toolpkg::Interpolation::Bilinear;
};

toolpkg::ToolPlan plan_tools(const ImageAnalysis& a, const intake::DatasetSpec& spec,
                             const PlanOptions& opt = {});

// Backend-suggested plans arrive as JSON ([{op, params, justification}]); they
// are only usable after validate_plan confirms every op is registered.
toolpkg::ToolPlan plan_from_json(const nlohmann::json& doc);

}  // namespace dsa::analysis
