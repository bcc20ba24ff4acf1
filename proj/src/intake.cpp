#include "dsa/intake.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "dsa/errors.hpp"
#include "dsa/image_io.hpp"

namespace dsa::intake {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fold(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// enums
// ---------------------------------------------------------------------------

std::string to_string(TaskKind k) { return k == TaskKind::Build ? "build" : "expand"; }

std::string to_string(TaskType t) {
    switch (t) {
        case TaskType::Classification: return "classification";
        case TaskType::Detection: return "detection";
        case TaskType::SemanticSeg: return "semantic_segmentation";
        case TaskType::InstanceSeg: return "instance_segmentation";
        case TaskType::PanopticSeg: return "panoptic_segmentation";
    }
    return "classification";
}

std::string to_string(AnnotationFormat f) {
    switch (f) {
        case AnnotationFormat::ClassDirs: return "class_dirs";
        case AnnotationFormat::YOLO: return "yolo";
        case AnnotationFormat::VOC: return "voc";
        case AnnotationFormat::COCO: return "coco";
        case AnnotationFormat::MaskPNG: return "mask_png";
    }
    return "class_dirs";
}

std::optional<TaskKind> task_kind_from_string(const std::string& s) {
    const std::string f = fold(s);
    if (f == "build") return TaskKind::Build;
    if (f == "expand") return TaskKind::Expand;
    return std::nullopt;
}

std::optional<TaskType> task_type_from_string(const std::string& s) {
    const std::string f = fold(s);
    if (f == "classification") return TaskType::Classification;
    if (f == "detection") return TaskType::Detection;
    if (f == "semantic_segmentation") return TaskType::SemanticSeg;
    if (f == "instance_segmentation") return TaskType::InstanceSeg;
    if (f == "panoptic_segmentation") return TaskType::PanopticSeg;
    return std::nullopt;
}

std::optional<AnnotationFormat> annotation_format_from_string(const std::string& s) {
    const std::string f = fold(s);
    if (f == "class_dirs" || f == "classdirs" || f == "dirs") return AnnotationFormat::ClassDirs;
    if (f == "yolo") return AnnotationFormat::YOLO;
    if (f == "voc") return AnnotationFormat::VOC;
    if (f == "coco") return AnnotationFormat::COCO;
    if (f == "mask_png" || f == "maskpng" || f == "masks") return AnnotationFormat::MaskPNG;
    return std::nullopt;
}

const ClassDef* DatasetSpec::match_class(const std::string& category) const {
    const std::string needle = fold(category);
    for (const auto& c : classes) {
        if (fold(c.name) == needle) return &c;
        for (const auto& s : c.synonyms)
            if (fold(s) == needle) return &c;
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// spec <-> json
// ---------------------------------------------------------------------------

json spec_to_json(const DatasetSpec& spec) {
    json classes = json::array();
    for (const auto& c : spec.classes)
        classes.push_back(
            {{"name", c.name}, {"target_count", c.target_count}, {"synonyms", c.synonyms}});
    json formats = json::array();
    for (const auto& f : spec.annotation_formats) formats.push_back(to_string(f));
    json doc{
        {"task_kind", to_string(spec.task_kind)},
        {"task_type", to_string(spec.task_type)},
        {"name", spec.name},
        {"classes", classes},
        {"annotation_formats", formats},
        {"per_class_target", spec.per_class_target},
        {"existing_root", spec.existing_root},
        {"context_docs", spec.context_docs},
        {"quality",
         {{"min_width", spec.quality.min_width},
          {"min_height", spec.quality.min_height},
          {"max_risk_score", spec.quality.max_risk_score},
          {"min_alignment_score", spec.quality.min_alignment_score},
          {"min_confidence", spec.quality.min_confidence}}},
        {"source",
         {{"kind", static_cast<int>(spec.source.kind)},
          {"locator", spec.source.locator},
          {"source_id", spec.source.source_id},
          {"politeness_ms", spec.source.politeness_ms}}},
    };
    if (spec.target_resolution)
        doc["target_resolution"] = {spec.target_resolution->first, spec.target_resolution->second};
    return doc;
}

DatasetSpec spec_from_json(const json& doc) {
    DatasetSpec spec;
    spec.task_kind = task_kind_from_string(doc.value("task_kind", "build")).value_or(TaskKind::Build);
    spec.task_type =
        task_type_from_string(doc.value("task_type", "classification")).value_or(TaskType::Classification);
    spec.name = doc.value("name", "dataset");
    for (const auto& c : doc.value("classes", json::array())) {
        ClassDef cd;
        cd.name = c.value("name", "");
        cd.target_count = c.value("target_count", 0ULL);
        for (const auto& s : c.value("synonyms", json::array())) cd.synonyms.push_back(s);
        spec.classes.push_back(std::move(cd));
    }
    for (const auto& f : doc.value("annotation_formats", json::array()))
        if (auto fmt = annotation_format_from_string(f)) spec.annotation_formats.insert(*fmt);
    spec.per_class_target = doc.value("per_class_target", 1ULL);
    spec.existing_root = doc.value("existing_root", "");
    for (const auto& d : doc.value("context_docs", json::array())) spec.context_docs.push_back(d);
    if (doc.contains("target_resolution") && doc["target_resolution"].is_array())
        spec.target_resolution = {doc["target_resolution"][0], doc["target_resolution"][1]};
    if (doc.contains("quality")) {
        const auto& q = doc["quality"];
        spec.quality.min_width = q.value("min_width", 1);
        spec.quality.min_height = q.value("min_height", 1);
        spec.quality.max_risk_score = q.value("max_risk_score", 0.5);
        spec.quality.min_alignment_score = q.value("min_alignment_score", 0.5);
        spec.quality.min_confidence = q.value("min_confidence", 0.5);
    }
    if (doc.contains("source")) {
        const auto& s = doc["source"];
        spec.source.kind = static_cast<acquisition::SourceDescriptor::Kind>(s.value("kind", 0));
        spec.source.locator = s.value("locator", "");
        spec.source.source_id = s.value("source_id", "local");
        spec.source.politeness_ms = s.value("politeness_ms", 0);
    }
    return spec;
}

// ---------------------------------------------------------------------------
// prompts
// ---------------------------------------------------------------------------

PromptLibrary PromptLibrary::builtin() {
    PromptLibrary p;
    p.demand_extraction =
        "You extract dataset construction requirements.\n"
        "Reply with a single JSON object and nothing else, with fields:\n"
        "  relevant (bool), task_kind (\"build\"|\"expand\"), task_type\n"
        "  (\"classification\"|\"detection\"|\"semantic_segmentation\"|\n"
        "   \"instance_segmentation\"|\"panoptic_segmentation\"),\n"
        "  dataset_name (string), classes (array of {name, synonyms}),\n"
        "  per_class_target (int >= 1), target_resolution ([w,h] or absent),\n"
        "  annotation_formats (array of strings or absent),\n"
        "  missing (array naming required fields the demand does not provide).\n"
        "Set relevant=false if the demand is unrelated to image dataset\n"
        "construction.\n"
        "{context}\n"
        "USER DEMAND:\n{demand}\nEND DEMAND\n";
    p.schema_repair =
        "Your previous reply did not validate: {error}\n"
        "Reply again with only the JSON object described before.\n"
        "{context}\n"
        "USER DEMAND:\n{demand}\nEND DEMAND\n";
    p.image_analysis =
        "Analyze the image for dataset curation. Reply with a single JSON\n"
        "object matching the image_analysis schema (target_category,\n"
        "instance_count, fine_grained_attributes with region boxes,\n"
        "background_composition, viewpoint_conditions, image_quality,\n"
        "semantic_alignment, quality_risks, decision).\n"
        "Candidate classes: {classes}\n"
        "Image id: {image_id}\n";
    p.diagnosis =
        "A pipeline failure needs a resolution. Reply with JSON\n"
        "{\"resolution\": \"Skip\"|\"Retry\"|\"Restart\"|\"Abort\"}.\n"
        "FAILURE CONTEXT:\n{failure}\n";
    return p;
}

namespace {

std::string read_text_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) return {};
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string replace_all(std::string text, const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
    return text;
}

}  // namespace

PromptLibrary PromptLibrary::load(const fs::path& dir) {
    PromptLibrary p = builtin();
    if (dir.empty() || !fs::is_directory(dir)) return p;
    if (auto t = read_text_file(dir / "demand_extraction.txt"); !t.empty()) p.demand_extraction = t;
    if (auto t = read_text_file(dir / "schema_repair.txt"); !t.empty()) p.schema_repair = t;
    if (auto t = read_text_file(dir / "image_analysis.txt"); !t.empty()) p.image_analysis = t;
    if (auto t = read_text_file(dir / "diagnosis.txt"); !t.empty()) p.diagnosis = t;
    return p;
}

// ---------------------------------------------------------------------------
// parse_demand
// ---------------------------------------------------------------------------

namespace {

// strict check of the extraction document before it is accepted
std::string extraction_schema_error(const json& doc) {
    if (!doc.is_object()) return "reply is not a JSON object";
    if (!doc.contains("relevant") || !doc["relevant"].is_boolean()) return "missing bool 'relevant'";
    if (doc["relevant"] == false) return {};  // nothing else required
    if (!doc.contains("task_kind") || !task_kind_from_string(doc["task_kind"].get<std::string>()))
        return "bad 'task_kind'";
    if (!doc.contains("task_type") || !task_type_from_string(doc["task_type"].get<std::string>()))
        return "bad 'task_type'";
    if (doc.contains("classes")) {
        if (!doc["classes"].is_array()) return "'classes' must be an array";
        for (const auto& c : doc["classes"])
            if (!c.is_object() || !c.contains("name") || !c["name"].is_string() ||
                c["name"].get<std::string>().empty())
                return "each class needs a non-empty 'name'";
    }
    if (doc.contains("per_class_target") &&
        (!doc["per_class_target"].is_number_unsigned() || doc["per_class_target"] == 0))
        return "'per_class_target' must be an integer >= 1";
    if (doc.contains("target_resolution") && !doc["target_resolution"].is_null()) {
        const auto& r = doc["target_resolution"];
        if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() ||
            !r[1].is_number_integer() || r[0] <= 0 || r[1] <= 0)
            return "'target_resolution' must be [w,h] positive";
    }
    if (doc.contains("annotation_formats") && !doc["annotation_formats"].is_null()) {
        if (!doc["annotation_formats"].is_array()) return "'annotation_formats' must be an array";
        for (const auto& f : doc["annotation_formats"])
            if (!f.is_string() || !annotation_format_from_string(f))
                return "unknown annotation format";
    }
    if (doc.contains("missing") && !doc["missing"].is_array()) return "'missing' must be an array";
    return {};
}

std::set<AnnotationFormat> default_formats(TaskType t) {
    switch (t) {
        case TaskType::Classification:
            return {AnnotationFormat::ClassDirs};
        case TaskType::Detection:
            return {AnnotationFormat::YOLO, AnnotationFormat::VOC, AnnotationFormat::COCO};
        default:
            return {AnnotationFormat::MaskPNG, AnnotationFormat::COCO};
    }
}

std::vector<Violation> validate_spec_impl(const DatasetSpec& spec, bool allow_unresolved_expand) {
    std::vector<Violation> out;
    const bool unresolved_expand = spec.task_kind == TaskKind::Expand && spec.classes.empty();
    if (spec.classes.empty() && !(allow_unresolved_expand && unresolved_expand))
        out.push_back({"classes", "empty"});
    std::set<std::string> seen;
    for (const auto& c : spec.classes) {
        if (c.name.empty()) out.push_back({"classes", "empty-name"});
        if (!seen.insert(fold(c.name)).second) out.push_back({"classes", "uniqueness"});
    }
    if (spec.per_class_target < 1) out.push_back({"per_class_target", "must be >= 1"});
    // pre-resolution Expand specs have no root yet; the caller supplies it
    if (spec.task_kind == TaskKind::Expand && spec.existing_root.empty() &&
        !allow_unresolved_expand)
        out.push_back({"source", "missing-root"});
    if (spec.task_type == TaskType::Classification) {
        for (const auto& f : spec.annotation_formats)
            if (f != AnnotationFormat::ClassDirs)
                out.push_back({"annotation_formats", "classification allows class_dirs only"});
    }
    if (spec.task_type == TaskType::SemanticSeg || spec.task_type == TaskType::InstanceSeg ||
        spec.task_type == TaskType::PanopticSeg) {
        if (!spec.annotation_formats.count(AnnotationFormat::MaskPNG))
            out.push_back({"annotation_formats", "segmentation requires mask_png"});
    }
    if (spec.target_resolution &&
        (spec.target_resolution->first < 1 || spec.target_resolution->second < 1))
        out.push_back({"target_resolution", "must be positive"});
    const auto& q = spec.quality;
    if (q.min_width < 1 || q.min_height < 1)
        out.push_back({"quality_constraints", "min_resolution must be positive"});
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(q.max_risk_score) || !in01(q.min_alignment_score) || !in01(q.min_confidence))
        out.push_back({"quality_constraints", "fractions must lie in [0,1]"});
    return out;
}

}  // namespace

std::vector<Violation> validate_spec(const DatasetSpec& spec) {
    return validate_spec_impl(spec, false);
}

std::variant<DatasetSpec, ClarificationRequest> parse_demand(
    const std::string& raw, const gateway::TextModelHandle& backend, const PromptLibrary& prompts,
    const std::vector<std::string>& context_docs) {
    if (raw.empty()) throw PipelineError("parse_demand: empty demand");

    std::string context;
    for (const auto& doc : context_docs) context += "CONTEXT DOCUMENT:\n" + doc + "\n";

    std::string prompt = replace_all(prompts.demand_extraction, "{context}", context);
    prompt = replace_all(prompt, "{demand}", raw);

    json extraction;
    std::string error;
    // one schema-repair retry, then MalformedBackendReply
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string reply = gateway::complete_text(backend, prompt);
        extraction = json::parse(reply, nullptr, false);
        error = extraction.is_discarded() ? "reply is not JSON" : extraction_schema_error(extraction);
        if (error.empty()) break;
        std::string repair = replace_all(prompts.schema_repair, "{error}", error);
        repair = replace_all(repair, "{context}", context);
        prompt = replace_all(repair, "{demand}", raw);
    }
    if (!error.empty()) throw MalformedBackendReply("extraction failed validation: " + error);

    if (extraction["relevant"] == false)
        throw IrrelevantDemand("demand unrelated to dataset construction");

    if (extraction.contains("missing") && !extraction["missing"].empty()) {
        ClarificationRequest req;
        std::string msg = "Please provide: ";
        for (const auto& m : extraction["missing"]) {
            req.missing.push_back(m);
            msg += m.get<std::string>() + " ";
        }
        req.message = msg;
        return req;
    }

    DatasetSpec spec;
    spec.task_kind = *task_kind_from_string(extraction["task_kind"].get<std::string>());
    spec.task_type = *task_type_from_string(extraction["task_type"].get<std::string>());
    spec.name = extraction.value("dataset_name", spec.task_kind == TaskKind::Expand ? "dataset"
                                                                                    : "new-dataset");
    for (const auto& c : extraction.value("classes", json::array())) {
        ClassDef cd;
        cd.name = c["name"];
        for (const auto& s : c.value("synonyms", json::array())) cd.synonyms.push_back(s);
        spec.classes.push_back(std::move(cd));
    }
    spec.per_class_target = extraction.value("per_class_target", 1ULL);
    for (auto& c : spec.classes)
        if (c.target_count == 0) c.target_count = spec.per_class_target;
    if (extraction.contains("target_resolution") && extraction["target_resolution"].is_array())
        spec.target_resolution = {extraction["target_resolution"][0],
                                  extraction["target_resolution"][1]};
    if (extraction.contains("annotation_formats") && extraction["annotation_formats"].is_array())
        for (const auto& f : extraction["annotation_formats"])
            spec.annotation_formats.insert(*annotation_format_from_string(f));
    if (spec.annotation_formats.empty()) spec.annotation_formats = default_formats(spec.task_type);
    spec.context_docs = context_docs;

    const auto violations = validate_spec_impl(spec, /*allow_unresolved_expand=*/true);
    if (!violations.empty())
        throw MalformedBackendReply("extraction maps to an invalid spec: " + violations[0].field +
                                    ": " + violations[0].rule);
    return spec;
}

// ---------------------------------------------------------------------------
// expand resolution
// ---------------------------------------------------------------------------

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = fold(p.extension().string());
    return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

bool dir_has_image(const fs::path& dir) {
    if (!fs::is_directory(dir)) return false;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) return true;
    return false;
}

bool dir_has_ext(const fs::path& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) return false;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && fold(e.path().extension().string()) == ext) return true;
    return false;
}

const std::set<std::string>& reserved_dir_names() {
    static const std::set<std::string> r = {
        "jpegimages", "annotations",  "imagesets",        "images",
        "labels",     "labels_yolo",  "annotations_voc",  "masks",
        "masks_semantic", "masks_instance", "masks_panoptic", "segmentationclass"};
    return r;
}

std::optional<AnnotationFormat> detect_layout(const fs::path& root) {
    // order fixed: ClassDirs, VOC, COCO, YOLO, MaskPNG; first match wins
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) subdirs.push_back(e.path());
    std::sort(subdirs.begin(), subdirs.end());

    bool classdirs = !subdirs.empty();
    for (const auto& d : subdirs) {
        if (reserved_dir_names().count(fold(d.filename().string())) || !dir_has_image(d)) {
            classdirs = false;
            break;
        }
    }
    if (classdirs) return AnnotationFormat::ClassDirs;

    if (dir_has_image(root / "JPEGImages") && dir_has_ext(root / "Annotations", ".xml"))
        return AnnotationFormat::VOC;

    const bool coco_json = fs::is_regular_file(root / "annotations_coco.json") ||
                           dir_has_ext(root / "annotations", ".json");
    if (coco_json && (dir_has_image(root / "images") || dir_has_image(root)))
        return AnnotationFormat::COCO;

    if (dir_has_image(root / "images") && dir_has_ext(root / "labels", ".txt"))
        return AnnotationFormat::YOLO;

    if (dir_has_image(root / "images") &&
        (dir_has_ext(root / "masks", ".png") || dir_has_ext(root / "masks_semantic", ".png")))
        return AnnotationFormat::MaskPNG;

    return std::nullopt;
}

std::vector<fs::path> images_under(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void collect_size_stats(const std::vector<fs::path>& images, ExistingDatasetMeta& meta) {
    bool first = true;
    bool uniform = true;
    int uw = 0, uh = 0;
    for (const auto& p : images) {
        Image img;
        try {
            img = load_image(p);
        } catch (const DecodeFailure&) {
            continue;
        }
        ++meta.image_count;
        if (first) {
            meta.min_width = meta.max_width = uw = img.width;
            meta.min_height = meta.max_height = uh = img.height;
            first = false;
        } else {
            meta.min_width = std::min(meta.min_width, img.width);
            meta.max_width = std::max(meta.max_width, img.width);
            meta.min_height = std::min(meta.min_height, img.height);
            meta.max_height = std::max(meta.max_height, img.height);
            if (img.width != uw || img.height != uh) uniform = false;
        }
    }
    if (!first && uniform) meta.uniform_resolution = {uw, uh};
}

std::string xml_tag(const std::string& xml, const std::string& tag, std::size_t from) {
    const std::string open = "<" + tag + ">", close = "</" + tag + ">";
    const auto a = xml.find(open, from);
    if (a == std::string::npos) return {};
    const auto b = xml.find(close, a);
    if (b == std::string::npos) return {};
    return xml.substr(a + open.size(), b - a - open.size());
}

}  // namespace

std::pair<DatasetSpec, ExistingDatasetMeta> resolve_expand_target(const DatasetSpec& spec,
                                                                  const fs::path& root) {
    if (spec.task_kind != TaskKind::Expand)
        throw PipelineError("resolve_expand_target: spec is not Expand");
    if (!fs::is_directory(root)) throw LocatorMissing("expand root missing: " + root.string());

    const bool any_entry = fs::directory_iterator(root) != fs::directory_iterator();
    if (!any_entry) throw EmptyDataset("expand root is empty: " + root.string());

    const auto layout = detect_layout(root);
    if (!layout) throw UnrecognizedLayout("no known dataset layout under " + root.string());

    ExistingDatasetMeta meta;
    meta.root = root.string();
    meta.layout = *layout;

    std::vector<fs::path> images;
    switch (*layout) {
        case AnnotationFormat::ClassDirs: {
            for (const auto& e : fs::directory_iterator(root)) {
                if (!e.is_directory()) continue;
                const std::string cls = e.path().filename().string();
                const auto imgs = images_under(e.path());
                meta.class_names.push_back(cls);
                meta.per_class_counts[cls] = imgs.size();
                images.insert(images.end(), imgs.begin(), imgs.end());
            }
            std::sort(meta.class_names.begin(), meta.class_names.end());
            break;
        }
        case AnnotationFormat::VOC: {
            images = images_under(root / "JPEGImages");
            for (const auto& e : fs::directory_iterator(root / "Annotations")) {
                if (fold(e.path().extension().string()) != ".xml") continue;
                std::ifstream in(e.path());
                const std::string xml{std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>()};
                std::size_t pos = 0;
                while (true) {
                    const auto a = xml.find("<object>", pos);
                    if (a == std::string::npos) break;
                    const std::string name = xml_tag(xml, "name", a);
                    if (!name.empty()) ++meta.per_class_counts[name];
                    pos = a + 8;
                }
            }
            for (const auto& [k, _] : meta.per_class_counts) meta.class_names.push_back(k);
            break;
        }
        case AnnotationFormat::COCO: {
            images = images_under(fs::is_directory(root / "images") ? root / "images" : root);
            fs::path jsonPath = root / "annotations_coco.json";
            if (!fs::is_regular_file(jsonPath)) {
                for (const auto& e : fs::directory_iterator(root / "annotations"))
                    if (fold(e.path().extension().string()) == ".json") {
                        jsonPath = e.path();
                        break;
                    }
            }
            std::ifstream in(jsonPath);
            json doc = json::parse(in, nullptr, false);
            if (!doc.is_discarded() && doc.is_object()) {
                std::map<long, std::string> cats;
                for (const auto& c : doc.value("categories", json::array()))
                    cats[c.value("id", 0L)] = c.value("name", "");
                for (const auto& [_, name] : cats) meta.class_names.push_back(name);
                for (const auto& a : doc.value("annotations", json::array())) {
                    auto it = cats.find(a.value("category_id", -1L));
                    if (it != cats.end()) ++meta.per_class_counts[it->second];
                }
            }
            break;
        }
        case AnnotationFormat::YOLO: {
            images = images_under(root / "images");
            std::vector<std::string> names;
            std::ifstream cls(root / "classes.txt");
            std::string line;
            while (std::getline(cls, line))
                if (!line.empty()) names.push_back(line);
            std::map<long, std::uint64_t> counts;
            for (const auto& e : fs::directory_iterator(root / "labels")) {
                if (fold(e.path().extension().string()) != ".txt") continue;
                std::ifstream in(e.path());
                long id;
                double a, b, c, d;
                while (in >> id >> a >> b >> c >> d) ++counts[id];
            }
            for (const auto& [id, n] : counts) {
                const std::string name = static_cast<std::size_t>(id) < names.size()
                                             ? names[id]
                                             : "class_" + std::to_string(id);
                meta.class_names.push_back(name);
                meta.per_class_counts[name] = n;
            }
            if (meta.class_names.empty()) meta.class_names = names;
            break;
        }
        case AnnotationFormat::MaskPNG: {
            images = images_under(root / "images");
            const fs::path mask_dir =
                fs::is_directory(root / "masks") ? root / "masks" : root / "masks_semantic";
            std::set<std::uint32_t> labels;
            for (const auto& e : fs::directory_iterator(mask_dir)) {
                if (fold(e.path().extension().string()) != ".png") continue;
                try {
                    const Mask m = load_png_indices(e.path());
                    for (auto v : m.labels) labels.insert(v);
                } catch (const DecodeFailure&) {
                }
            }
            labels.erase(0);
            for (auto v : labels) {
                const std::string name = "class_" + std::to_string(v);
                meta.class_names.push_back(name);
                meta.per_class_counts[name] = images.size();
            }
            break;
        }
    }

    if (images.empty()) throw EmptyDataset("no images under " + root.string());
    collect_size_stats(images, meta);
    if (meta.image_count == 0) throw EmptyDataset("no decodable images under " + root.string());

    DatasetSpec resolved = spec;
    resolved.existing_root = root.string();
    // a generic demand name defers to the dataset directory's own name
    if ((resolved.name.empty() || resolved.name == "dataset") && root.has_filename())
        resolved.name = root.filename().string();
    if (!spec.classes.empty()) {
        std::set<std::string> user, found;
        for (const auto& c : spec.classes) user.insert(fold(c.name));
        for (const auto& n : meta.class_names) found.insert(fold(n));
        if (user != found)
            meta.conflicts.push_back(
                {"classes", "demand names " + std::to_string(user.size()) +
                                " classes but the existing dataset has " +
                                std::to_string(found.size()) + " (sets differ)"});
    }
    resolved.classes.clear();
    for (const auto& n : meta.class_names) {
        ClassDef cd;
        cd.name = n;
        cd.target_count = resolved.per_class_target;
        resolved.classes.push_back(std::move(cd));
    }
    if (meta.uniform_resolution) resolved.target_resolution = meta.uniform_resolution;
    resolved.annotation_formats = {meta.layout};  // inherit exactly what exists
    switch (meta.layout) {
        case AnnotationFormat::ClassDirs:
            resolved.task_type = TaskType::Classification;
            break;
        case AnnotationFormat::VOC:
        case AnnotationFormat::COCO:
        case AnnotationFormat::YOLO:
            resolved.task_type = TaskType::Detection;
            break;
        case AnnotationFormat::MaskPNG:
            resolved.task_type = TaskType::SemanticSeg;
            break;
    }
    return {resolved, meta};
}

}  // namespace dsa::intake
