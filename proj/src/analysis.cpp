#include "dsa/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "dsa/errors.hpp"

namespace dsa::analysis {

using nlohmann::json;

namespace {

std::string fold(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

NormalizedBox box_from_json(const json& arr, const std::string& field) {
    if (!arr.is_array() || arr.size() != 4)
        throw SchemaViolation(field, "box must be [x1,y1,x2,y2]");
    for (const auto& v : arr)
        if (!v.is_number()) throw SchemaViolation(field, "box coordinates must be numbers");
    NormalizedBox b{arr[0], arr[1], arr[2], arr[3]};
    if (b.x1 < 0.0 || b.x2 > 1.0 || b.y1 < 0.0 || b.y2 > 1.0)
        throw SchemaViolation(field, "coordinates outside [0,1]");
    if (!(b.x1 < b.x2)) throw SchemaViolation(field, "x-order");
    if (!(b.y1 < b.y2)) throw SchemaViolation(field, "y-order");
    return b;
}

double number_in(const json& obj, const std::string& key, double lo, double hi,
                 const std::string& field, std::optional<double> fallback = std::nullopt) {
    if (!obj.contains(key)) {
        if (fallback) return *fallback;
        throw SchemaViolation(field, "missing");
    }
    if (!obj[key].is_number()) throw SchemaViolation(field, "not a number");
    const double v = obj[key];
    if (v < lo || v > hi) throw SchemaViolation(field, "outside range");
    return v;
}

bool looks_region_key(const std::string& key) {
    return key.ends_with("_region") || key.ends_with("_bounding_box") || key == "region" ||
           key.ends_with("_box");
}

// fine_grained_attributes may nest objects; flatten with dotted names and
// attach "*_region"/"*_bounding_box" boxes to their prefix attribute
void flatten_attributes(const json& obj, const std::string& prefix,
                        std::vector<RegionAttribute>& out) {
    for (const auto& [key, value] : obj.items()) {
        const std::string name = prefix.empty() ? key : prefix + "." + key;
        if (looks_region_key(key) && value.is_array()) {
            out.push_back({name, "", box_from_json(value, "fine_grained_attributes." + name)});
        } else if (value.is_object()) {
            flatten_attributes(value, name, out);
        } else if (value.is_string()) {
            out.push_back({name, value.get<std::string>(), std::nullopt});
        } else {
            out.push_back({name, value.dump(), std::nullopt});
        }
    }
}

std::pair<int, int> parse_resolution(const json& v) {
    if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer())
        return {v[0], v[1]};
    if (v.is_string()) {
        int w = 0, h = 0;
        if (std::sscanf(v.get<std::string>().c_str(), "%dx%d", &w, &h) == 2 && w > 0 && h > 0)
            return {w, h};
    }
    throw SchemaViolation("image_quality.resolution", "expected \"WxH\" or [w,h]");
}

const std::set<std::string>& known_top_level_keys() {
    static const std::set<std::string> k = {
        "image_id",          "target_category",      "instance_count",
        "fine_grained_attributes", "background_composition", "viewpoint_conditions",
        "image_quality",     "semantic_alignment",   "quality_risks",
        "decision"};
    return k;
}

}  // namespace

ImageAnalysis parse_analysis(const std::string& raw) {
    if (raw.empty()) throw NotADocument("empty analysis document");
    json doc = json::parse(raw, nullptr, false);
    if (doc.is_discarded()) throw NotADocument("analysis is not valid JSON");
    return parse_analysis(doc);
}

ImageAnalysis parse_analysis(const json& doc) {
    if (!doc.is_object() || doc.empty()) throw NotADocument("analysis is not a JSON object");
    ImageAnalysis a;

    a.image_id = doc.value("image_id", "");
    if (!doc.contains("target_category") || !doc["target_category"].is_string() ||
        doc["target_category"].get<std::string>().empty())
        throw SchemaViolation("target_category", "missing or empty");
    a.target_category = doc["target_category"];

    if (doc.contains("instance_count")) {
        if (!doc["instance_count"].is_number_integer() || doc["instance_count"].get<int>() < 0)
            throw SchemaViolation("instance_count", "must be an integer >= 0");
        a.instance_count = doc["instance_count"];
    }

    if (doc.contains("fine_grained_attributes")) {
        if (!doc["fine_grained_attributes"].is_object())
            throw SchemaViolation("fine_grained_attributes", "must be an object");
        flatten_attributes(doc["fine_grained_attributes"], "", a.attributes);
    }

    if (doc.contains("background_composition")) {
        const auto& bg = doc["background_composition"];
        if (!bg.is_object()) throw SchemaViolation("background_composition", "must be an object");
        a.background.scene_type = bg.value("scene_type", "");
        if (bg.contains("background_distribution")) {
            for (const auto& [key, value] : bg["background_distribution"].items())
                a.background.regions.emplace_back(
                    key, box_from_json(value, "background_composition." + key));
        }
    }

    if (doc.contains("viewpoint_conditions")) {
        const auto& vp = doc["viewpoint_conditions"];
        a.viewpoint.camera_angle = vp.value("camera_angle", "");
        a.viewpoint.camera_elevation = vp.value("camera_elevation", "");
        a.viewpoint.lighting = vp.value("lighting", "");
        a.viewpoint.depth = vp.value("depth", "");
        if (vp.contains("light_direction_vector")) {
            const auto& lv = vp["light_direction_vector"];
            if (!lv.is_array() || lv.size() != 2)
                throw SchemaViolation("viewpoint_conditions.light_direction_vector",
                                      "must be a 2-vector");
            for (int i = 0; i < 2; ++i) {
                const double v = lv[i];
                if (v < -1.0 || v > 1.0)
                    throw SchemaViolation("viewpoint_conditions.light_direction_vector",
                                          "components must lie in [-1,1]");
                a.viewpoint.light_direction[i] = v;
            }
        }
    }

    if (!doc.contains("image_quality") || !doc["image_quality"].is_object())
        throw SchemaViolation("image_quality", "missing");
    {
        const auto& q = doc["image_quality"];
        if (!q.contains("resolution")) throw SchemaViolation("image_quality.resolution", "missing");
        std::tie(a.quality.width, a.quality.height) = parse_resolution(q["resolution"]);
        a.quality.sharpness_score =
            number_in(q, "sharpness_score", 0.0, 1.0, "image_quality.sharpness_score", 0.0);
        a.quality.color_fidelity = q.value("color_fidelity", "high");
        a.quality.detail_completeness = number_in(q, "detail_completeness", 0.0, 100.0,
                                                  "image_quality.detail_completeness", 100.0);
        a.quality.style_consistency = q.value("style_consistency", "");
        a.quality.jpeg_artifacts = q.value("jpeg_artifacts", false);
    }

    if (!doc.contains("semantic_alignment") || !doc["semantic_alignment"].is_object())
        throw SchemaViolation("semantic_alignment", "missing");
    {
        const auto& s = doc["semantic_alignment"];
        a.alignment.class_prototype = s.value("class_prototype", a.target_category);
        a.alignment.similarity_score =
            number_in(s, "similarity_score", 0.0, 1.0, "semantic_alignment.similarity_score");
        if (s.contains("match_features"))
            for (const auto& f : s["match_features"]) a.alignment.match_features.push_back(f);
        if (s.contains("alignment_vector_diff")) {
            for (const auto& [key, value] : s["alignment_vector_diff"].items()) {
                if (!value.is_number() || value.get<double>() < 0.0)
                    throw SchemaViolation("semantic_alignment.alignment_vector_diff",
                                          "entries must be nonnegative numbers");
                a.alignment.vector_diff[key] = value;
            }
        }
    }

    if (!doc.contains("quality_risks") || !doc["quality_risks"].is_object())
        throw SchemaViolation("quality_risks", "missing");
    {
        const auto& r = doc["quality_risks"];
        a.risks.occlusion_detected = r.value("occlusion_detected", false);
        a.risks.occlusion_level =
            number_in(r, "occlusion_level", 0.0, 1.0, "quality_risks.occlusion_level", 0.0);
        a.risks.blur_score = number_in(r, "blur_score", 0.0, 1.0, "quality_risks.blur_score", 0.0);
        a.risks.exposure_abnormality = r.value("exposure_abnormality", false);
        a.risks.viewpoint_deviation_score =
            number_in(r, "viewpoint_deviation_score", 0.0, 1.0,
                      "quality_risks.viewpoint_deviation_score", 0.0);
        a.risks.noise_level = r.value("noise_level", "low");
        if (a.risks.noise_level != "low" && a.risks.noise_level != "medium" &&
            a.risks.noise_level != "high")
            throw SchemaViolation("quality_risks.noise_level", "must be low/medium/high");
        if (r.contains("warnings"))
            for (const auto& w : r["warnings"]) a.risks.warnings.push_back(w);
        if (r.contains("total_risk_score"))
            a.risks.total_risk_score =
                number_in(r, "total_risk_score", 0.0, 1.0, "quality_risks.total_risk_score");
    }

    if (!doc.contains("decision") || !doc["decision"].is_object())
        throw SchemaViolation("decision", "missing");
    {
        const auto& d = doc["decision"];
        if (!d.contains("qualified") || !d["qualified"].is_boolean())
            throw SchemaViolation("decision.qualified", "missing bool");
        a.decision.qualified = d["qualified"];
        a.decision.confidence = number_in(d, "confidence", 0.0, 1.0, "decision.confidence", 0.0);
        a.decision.reason = d.value("reason", "");
    }

    for (const auto& [key, value] : doc.items())
        if (!known_top_level_keys().count(key)) a.extras[key] = value;

    return a;
}

json serialize_analysis(const ImageAnalysis& a) {
    json attrs = json::object();
    for (const auto& at : a.attributes) {
        if (at.region) {
            attrs[at.name] = {at.region->x1, at.region->y1, at.region->x2, at.region->y2};
        } else {
            attrs[at.name] = at.value;
        }
    }
    json bg_regions = json::object();
    for (const auto& [name, box] : a.background.regions)
        bg_regions[name] = {box.x1, box.y1, box.x2, box.y2};
    json diff = json::object();
    for (const auto& [k, v] : a.alignment.vector_diff) diff[k] = v;

    char res[32];
    std::snprintf(res, sizeof(res), "%dx%d", a.quality.width, a.quality.height);

    json risks{{"occlusion_detected", a.risks.occlusion_detected},
               {"occlusion_level", a.risks.occlusion_level},
               {"blur_score", a.risks.blur_score},
               {"exposure_abnormality", a.risks.exposure_abnormality},
               {"viewpoint_deviation_score", a.risks.viewpoint_deviation_score},
               {"noise_level", a.risks.noise_level},
               {"warnings", a.risks.warnings}};
    if (a.risks.total_risk_score) risks["total_risk_score"] = *a.risks.total_risk_score;

    json doc{
        {"image_id", a.image_id},
        {"target_category", a.target_category},
        {"instance_count", a.instance_count},
        {"fine_grained_attributes", attrs},
        {"background_composition",
         {{"scene_type", a.background.scene_type}, {"background_distribution", bg_regions}}},
        {"viewpoint_conditions",
         {{"camera_angle", a.viewpoint.camera_angle},
          {"camera_elevation", a.viewpoint.camera_elevation},
          {"lighting", a.viewpoint.lighting},
          {"light_direction_vector", {a.viewpoint.light_direction[0], a.viewpoint.light_direction[1]}},
          {"depth", a.viewpoint.depth}}},
        {"image_quality",
         {{"resolution", res},
          {"sharpness_score", a.quality.sharpness_score},
          {"color_fidelity", a.quality.color_fidelity},
          {"detail_completeness", a.quality.detail_completeness},
          {"style_consistency", a.quality.style_consistency},
          {"jpeg_artifacts", a.quality.jpeg_artifacts}}},
        {"semantic_alignment",
         {{"class_prototype", a.alignment.class_prototype},
          {"similarity_score", a.alignment.similarity_score},
          {"match_features", a.alignment.match_features},
          {"alignment_vector_diff", diff}}},
        {"quality_risks", risks},
        {"decision",
         {{"qualified", a.decision.qualified},
          {"confidence", a.decision.confidence},
          {"reason", a.decision.reason}}},
    };
    for (const auto& [key, value] : a.extras.items()) doc[key] = value;
    return doc;
}

std::optional<Violation> check_resolution(const ImageAnalysis& a, const Image& img) {
    if (a.quality.width != img.width || a.quality.height != img.height)
        return Violation{"image_quality.resolution", "does not match pixel buffer"};
    return std::nullopt;
}

double score_alignment(const ImageAnalysis& a, const intake::DatasetSpec& spec) {
    return spec.match_class(a.target_category) ? a.alignment.similarity_score : 0.0;
}

double assess_risk(const ImageAnalysis& a) {
    if (a.risks.total_risk_score) return *a.risks.total_risk_score;
    double risk = std::max(a.risks.blur_score, a.risks.viewpoint_deviation_score);
    risk = std::max(risk, a.risks.occlusion_level);
    if (a.risks.exposure_abnormality) risk = 1.0;
    return risk;
}

Decision decide(const ImageAnalysis& a, const intake::QualityConstraints& qc,
                std::optional<double> alignment) {
    const double align = alignment.value_or(a.alignment.similarity_score);
    const double risk = assess_risk(a);
    Decision d;
    d.confidence = a.decision.confidence;
    if (align < qc.min_alignment_score) {
        d.reason = "alignment below threshold";
        return d;
    }
    if (risk > qc.max_risk_score) {
        d.reason = "risk above threshold";
        return d;
    }
    if (a.quality.width < qc.min_width || a.quality.height < qc.min_height) {
        d.reason = "resolution below minimum";
        return d;
    }
    d.accept = true;
    d.reason = "all gates passed";
    return d;
}

toolpkg::ToolPlan plan_tools(const ImageAnalysis& a, const intake::DatasetSpec& spec,
                             const PlanOptions& opt) {
    toolpkg::ToolPlan plan;

    std::optional<NormalizedBox> object_union;
    for (const auto& at : a.attributes) {
        if (!at.region) continue;
        object_union = object_union ? union_box(*object_union, *at.region) : *at.region;
    }
    if (object_union && object_union->area() < opt.crop_area_threshold) {
        const NormalizedBox padded = pad_box(*object_union, opt.crop_pad);
        plan.steps.push_back({"crop",
                              {{"box", {padded.x1, padded.y1, padded.x2, padded.y2}}},
                              "background dominates; crop to padded object union"});
    }

    if (fold(a.quality.color_fidelity) != "high")
        plan.steps.push_back(
            {"color_normalize", json::object(), "color fidelity below high"});

    if (spec.target_resolution) {
        plan.steps.push_back(
            {"resize",
             {{"width", spec.target_resolution->first},
              {"height", spec.target_resolution->second},
              {"interp", opt.resize_interp == toolpkg::Interpolation::Bicubic ? "bicubic"
                                                                              : "bilinear"}},
             "conform to target resolution"});
    }
    return plan;
}

toolpkg::ToolPlan plan_from_json(const json& doc) {
    if (!doc.is_array()) throw NotADocument("plan must be a JSON array of steps");
    toolpkg::ToolPlan plan;
    for (const auto& s : doc) {
        if (!s.is_object() || !s.contains("op") || !s["op"].is_string())
            throw SchemaViolation("plan.step", "each step needs a string 'op'");
        plan.steps.push_back({s["op"], s.value("params", json::object()),
                              s.value("justification", "")});
    }
    return plan;
}

}  // namespace dsa::analysis
