#include "dsa/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dsa/errors.hpp"
#include "dsa/image_io.hpp"
#include "dsa/rle.hpp"
#include "dsa/toolpkg.hpp"

namespace dsa {

// ---------------------------------------------------------------------------
// COCO RLE codec (column-major, counts alternate 0-runs and 1-runs)
// ---------------------------------------------------------------------------

nlohmann::json rle_encode(const Mask& binary) {
    std::vector<std::uint64_t> counts;
    std::uint64_t run = 0;
    std::uint32_t current = 0;  // runs start with background
    for (int x = 0; x < binary.width; ++x) {
        for (int y = 0; y < binary.height; ++y) {
            const std::uint32_t v = binary.at(x, y) ? 1 : 0;
            if (v == current) {
                ++run;
            } else {
                counts.push_back(run);
                current = v;
                run = 1;
            }
        }
    }
    counts.push_back(run);
    return nlohmann::json{{"size", {binary.height, binary.width}}, {"counts", counts}};
}

Mask rle_decode(const nlohmann::json& rle) {
    if (!rle.is_object() || !rle.contains("size") || !rle.contains("counts"))
        throw PipelineError("rle: missing size/counts");
    const int h = rle["size"][0], w = rle["size"][1];
    Mask m = Mask::make(w, h, 0);
    std::size_t pos = 0;
    std::uint32_t value = 0;
    for (const auto& c : rle["counts"]) {
        const std::uint64_t run = c;
        for (std::uint64_t i = 0; i < run; ++i, ++pos) {
            if (pos >= m.labels.size()) throw PipelineError("rle: counts exceed size");
            const std::size_t x = pos / h, y = pos % h;  // column-major
            m.labels[y * static_cast<std::size_t>(w) + x] = value;
        }
        value = 1 - value;
    }
    if (pos != m.labels.size()) throw PipelineError("rle: counts do not cover size");
    return m;
}

}  // namespace dsa

namespace dsa::labeling {

using nlohmann::json;

// ---------------------------------------------------------------------------
// annotation
// ---------------------------------------------------------------------------

std::string assign_class_label(const analysis::ImageAnalysis& a,
                               const intake::DatasetSpec& spec) {
    const intake::ClassDef* cls = spec.match_class(a.target_category);
    if (!cls) throw NoMatchingClass("no spec class matches category: " + a.target_category);
    return cls->name;
}

std::vector<Detection> filter_by_confidence(const std::vector<Detection>& detections,
                                            double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw PipelineError("confidence threshold outside [0,1]");
    std::vector<Detection> out;
    for (const auto& d : detections)
        if (d.confidence >= threshold) out.push_back(d);  // inclusive gate
    return out;
}

std::vector<Detection> dedupe_detections(std::vector<Detection> detections, double iou_threshold) {
    std::stable_sort(detections.begin(), detections.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    std::vector<Detection> kept;
    for (const auto& d : detections) {
        bool dup = false;
        for (const auto& k : kept)
            if (iou(d.box, k.box) > iou_threshold) {
                dup = true;
                break;
            }
        if (!dup) kept.push_back(d);
    }
    return kept;
}

namespace {

std::string class_prompt_text(const intake::ClassDef& c) {
    std::string t = c.name;
    for (const auto& s : c.synonyms) t += ", " + s;
    return t;
}

// map a backend class name onto its canonical spec class; empty if unknown
std::string canonical_class(const intake::DatasetSpec& spec, const std::string& name) {
    const intake::ClassDef* c = spec.match_class(name);
    return c ? c->name : std::string();
}

}  // namespace

AnnotationSet annotate_detection(const acquisition::ImageRecord& image,
                                 const intake::DatasetSpec& spec, const gateway::Gateway& gw,
                                 const AnnotateOptions& opt) {
    AnnotationSet ann;
    ann.image_id = image.id;
    const double min_conf = spec.quality.min_confidence;

    std::vector<Detection> all;
    for (const auto& cls : spec.classes) {
        const std::vector<gateway::PromptSpec> prompts = {
            gateway::PromptSpec::text_prompt(class_prompt_text(cls))};
        const gateway::GroundingResult res = gateway::ground(gw.grounder, image, prompts);
        for (Detection d : res.detections) {
            const std::string canon = canonical_class(spec, d.class_name);
            if (canon.empty()) continue;
            d.class_name = canon;
            all.push_back(std::move(d));
        }
    }

    // one box-prompt re-query before discarding low-confidence detections
    for (Detection& d : all) {
        if (d.confidence >= min_conf || d.confidence < opt.requery_low) continue;
        const std::vector<gateway::PromptSpec> prompts = {gateway::PromptSpec::box_prompt(d.box)};
        const gateway::GroundingResult res = gateway::ground(gw.grounder, image, prompts);
        for (const Detection& r : res.detections) {
            if (canonical_class(spec, r.class_name) != d.class_name) continue;
            if (iou(r.box, d.box) <= 0.5) continue;
            d.box = r.box;
            d.confidence = r.confidence;
            break;
        }
    }

    ann.detections = dedupe_detections(filter_by_confidence(all, min_conf), opt.dedupe_iou);
    if (ann.detections.empty()) {
        ann.flagged = true;
        ann.flag_reason = "unlabeled: no detection met the confidence gate";
    }
    return ann;
}

AnnotationSet annotate_segmentation(const acquisition::ImageRecord& image,
                                    const intake::DatasetSpec& spec, const gateway::Gateway& gw,
                                    SegVariant variant) {
    AnnotationSet ann;
    ann.image_id = image.id;

    std::vector<gateway::PromptSpec> prompts;
    for (const auto& cls : spec.classes)
        prompts.push_back(gateway::PromptSpec::text_prompt(class_prompt_text(cls)));
    gateway::SegmentationResult res = gateway::segment(gw.segmenter, image, prompts);

    // canonicalize and drop classes outside the spec
    gateway::SegmentationResult kept;
    for (auto& m : res.masks) {
        const std::string canon = canonical_class(spec, m.class_name);
        if (canon.empty()) continue;
        m.class_name = canon;
        kept.masks.push_back(std::move(m));
    }

    for (const auto& m : kept.masks) {
        const auto violations = toolpkg::validate_mask(m.mask, image.pixels.width,
                                                       image.pixels.height);
        if (!violations.empty()) {
            ann.flagged = true;
            ann.flag_reason = "mask check: " + violations[0].field + ": " + violations[0].rule;
        }
    }

    const auto idx = class_index_map(spec);
    const int W = image.pixels.width, H = image.pixels.height;

    // paint in ascending confidence so the most confident mask wins overlaps
    std::vector<const gateway::SegMask*> order;
    for (const auto& m : kept.masks) order.push_back(&m);
    std::stable_sort(order.begin(), order.end(), [](const gateway::SegMask* a,
                                                    const gateway::SegMask* b) {
        return a->confidence < b->confidence;
    });

    switch (variant) {
        case SegVariant::Semantic: {
            Mask sem = Mask::make(W, H, 0);
            for (const auto* m : order) {
                const std::uint32_t cls = static_cast<std::uint32_t>(idx.at(m->class_name)) + 1;
                for (std::size_t i = 0; i < sem.labels.size(); ++i)
                    if (m->mask.labels[i]) sem.labels[i] = cls;
            }
            ann.semantic_map = std::move(sem);
            break;
        }
        case SegVariant::Instance: {
            ann.masks = std::move(kept);
            break;
        }
        case SegVariant::Panoptic: {
            PanopticMap pano;
            pano.width = W;
            pano.height = H;
            pano.ids.assign(static_cast<std::size_t>(W) * H, PanopticMap::encode(0, 0));
            for (const auto* m : order) {
                const std::uint32_t cls = static_cast<std::uint32_t>(idx.at(m->class_name)) + 1;
                const std::uint32_t id =
                    PanopticMap::encode(cls, static_cast<std::uint32_t>(m->instance_id));
                for (std::size_t i = 0; i < pano.ids.size(); ++i)
                    if (m->mask.labels[i]) pano.ids[i] = id;
            }
            ann.panoptic = std::move(pano);
            ann.masks = std::move(kept);  // keep instances for COCO emission
            break;
        }
    }
    return ann;
}

// ---------------------------------------------------------------------------
// YOLO
// ---------------------------------------------------------------------------

std::map<std::string, int> class_index_map(const intake::DatasetSpec& spec) {
    std::map<std::string, int> idx;
    for (std::size_t i = 0; i < spec.classes.size(); ++i)
        idx[spec.classes[i].name] = static_cast<int>(i);
    return idx;
}

std::string emit_yolo(const AnnotationSet& ann, int, int,
                      const std::map<std::string, int>& class_idx) {
    std::string out;
    char line[160];
    for (const auto& d : ann.detections) {
        auto it = class_idx.find(d.class_name);
        if (it == class_idx.end()) throw UnknownClass("yolo: unknown class " + d.class_name);
        const double cx = (d.box.x1 + d.box.x2) / 2.0;
        const double cy = (d.box.y1 + d.box.y2) / 2.0;
        const double w = d.box.x2 - d.box.x1;
        const double h = d.box.y2 - d.box.y1;
        std::snprintf(line, sizeof(line), "%d %.6f %.6f %.6f %.6f\n", it->second, cx, cy, w, h);
        out += line;
    }
    return out;
}

std::vector<Detection> parse_yolo(const std::string& text,
                                  const std::vector<std::string>& classes) {
    std::vector<Detection> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        int cls;
        double cx, cy, w, h;
        if (!(ls >> cls >> cx >> cy >> w >> h)) throw PipelineError("yolo: unparsable line");
        if (cls < 0 || static_cast<std::size_t>(cls) >= classes.size())
            throw UnknownClass("yolo: class index out of range");
        Detection d;
        d.class_name = classes[cls];
        d.box = {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
        d.confidence = 1.0;
        out.push_back(d);
    }
    return out;
}

// ---------------------------------------------------------------------------
// VOC
// ---------------------------------------------------------------------------

VocDoc voc_doc_from(const AnnotationSet& ann, const std::string& filename, int image_w,
                    int image_h, int depth) {
    VocDoc doc;
    doc.filename = filename;
    doc.width = image_w;
    doc.height = image_h;
    doc.depth = depth;
    for (const auto& d : ann.detections) {
        VocObject o;
        o.name = d.class_name;
        // 1-based inclusive pixel box: xmin = floor(x1*W)+1, xmax = round(x2*W)
        o.xmin = static_cast<int>(std::floor(d.box.x1 * image_w)) + 1;
        o.ymin = static_cast<int>(std::floor(d.box.y1 * image_h)) + 1;
        o.xmax = std::max(o.xmin, static_cast<int>(std::floor(d.box.x2 * image_w + 0.5)));
        o.ymax = std::max(o.ymin, static_cast<int>(std::floor(d.box.y2 * image_h + 0.5)));
        o.xmax = std::min(o.xmax, image_w);
        o.ymax = std::min(o.ymax, image_h);
        doc.objects.push_back(o);
    }
    return doc;
}

std::string emit_voc(const VocDoc& doc) {
    std::string out;
    out += "<annotation>\n";
    out += "  <filename>" + doc.filename + "</filename>\n";
    out += "  <size>\n";
    out += "    <width>" + std::to_string(doc.width) + "</width>\n";
    out += "    <height>" + std::to_string(doc.height) + "</height>\n";
    out += "    <depth>" + std::to_string(doc.depth) + "</depth>\n";
    out += "  </size>\n";
    for (const auto& o : doc.objects) {
        out += "  <object>\n";
        out += "    <name>" + o.name + "</name>\n";
        out += "    <bndbox>\n";
        out += "      <xmin>" + std::to_string(o.xmin) + "</xmin>\n";
        out += "      <ymin>" + std::to_string(o.ymin) + "</ymin>\n";
        out += "      <xmax>" + std::to_string(o.xmax) + "</xmax>\n";
        out += "      <ymax>" + std::to_string(o.ymax) + "</ymax>\n";
        out += "    </bndbox>\n";
        out += "  </object>\n";
    }
    out += "</annotation>\n";
    return out;
}

namespace {

std::string tag_value(const std::string& xml, const std::string& tag, std::size_t from,
                      std::size_t to) {
    const std::string open = "<" + tag + ">", close = "</" + tag + ">";
    const auto a = xml.find(open, from);
    if (a == std::string::npos || a >= to) return {};
    const auto b = xml.find(close, a);
    if (b == std::string::npos || b > to) return {};
    return xml.substr(a + open.size(), b - a - open.size());
}

}  // namespace

VocDoc parse_voc(const std::string& xml) {
    if (xml.find("<annotation>") == std::string::npos)
        throw PipelineError("voc: not an annotation document");
    VocDoc doc;
    doc.filename = tag_value(xml, "filename", 0, xml.size());
    doc.width = std::stoi(tag_value(xml, "width", 0, xml.size()));
    doc.height = std::stoi(tag_value(xml, "height", 0, xml.size()));
    doc.depth = std::stoi(tag_value(xml, "depth", 0, xml.size()));
    std::size_t pos = 0;
    while (true) {
        const auto a = xml.find("<object>", pos);
        if (a == std::string::npos) break;
        const auto b = xml.find("</object>", a);
        if (b == std::string::npos) throw PipelineError("voc: unclosed object");
        VocObject o;
        o.name = tag_value(xml, "name", a, b);
        o.xmin = std::stoi(tag_value(xml, "xmin", a, b));
        o.ymin = std::stoi(tag_value(xml, "ymin", a, b));
        o.xmax = std::stoi(tag_value(xml, "xmax", a, b));
        o.ymax = std::stoi(tag_value(xml, "ymax", a, b));
        doc.objects.push_back(o);
        pos = b + 9;
    }
    return doc;
}

NormalizedBox voc_box_to_normalized(const VocObject& o, int image_w, int image_h) {
    return {static_cast<double>(o.xmin - 1) / image_w, static_cast<double>(o.ymin - 1) / image_h,
            static_cast<double>(o.xmax) / image_w, static_cast<double>(o.ymax) / image_h};
}

// ---------------------------------------------------------------------------
// COCO
// ---------------------------------------------------------------------------

json emit_coco(const std::vector<std::pair<CocoImageMeta, AnnotationSet>>& entries,
               const intake::DatasetSpec& spec) {
    json images = json::array();
    json annotations = json::array();
    json categories = json::array();

    for (std::size_t i = 0; i < spec.classes.size(); ++i)
        categories.push_back({{"id", i + 1}, {"name", spec.classes[i].name}});
    const auto idx = class_index_map(spec);

    long next_ann_id = 1;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [meta, ann] = entries[i];
        const long image_id = static_cast<long>(i) + 1;
        images.push_back({{"id", image_id},
                          {"file_name", meta.file_name},
                          {"width", meta.width},
                          {"height", meta.height}});

        for (const auto& d : ann.detections) {
            const double x = d.box.x1 * meta.width;
            const double y = d.box.y1 * meta.height;
            const double w = (d.box.x2 - d.box.x1) * meta.width;
            const double h = (d.box.y2 - d.box.y1) * meta.height;
            annotations.push_back({{"id", next_ann_id++},
                                   {"image_id", image_id},
                                   {"category_id", idx.at(d.class_name) + 1},
                                   {"bbox", {x, y, w, h}},
                                   {"area", w * h},
                                   {"iscrowd", 0},
                                   {"score", d.confidence}});
        }
        if (ann.masks) {
            for (const auto& m : ann.masks->masks) {
                // bbox of the mask in absolute pixels
                int x0 = meta.width, y0 = meta.height, x1 = -1, y1 = -1;
                for (int y = 0; y < m.mask.height; ++y)
                    for (int x = 0; x < m.mask.width; ++x)
                        if (m.mask.at(x, y)) {
                            x0 = std::min(x0, x);
                            y0 = std::min(y0, y);
                            x1 = std::max(x1, x);
                            y1 = std::max(y1, y);
                        }
                if (x1 < 0) continue;  // empty mask carries no annotation
                annotations.push_back(
                    {{"id", next_ann_id++},
                     {"image_id", image_id},
                     {"category_id", idx.at(m.class_name) + 1},
                     {"segmentation", rle_encode(m.mask)},
                     {"area", m.mask.area()},
                     {"bbox", {double(x0), double(y0), double(x1 - x0 + 1), double(y1 - y0 + 1)}},
                     {"iscrowd", 0},
                     {"score", m.confidence}});
            }
        } else if (ann.semantic_map) {
            // one RLE per class present in the map
            std::set<std::uint32_t> present(ann.semantic_map->labels.begin(),
                                            ann.semantic_map->labels.end());
            present.erase(0);
            for (std::uint32_t cls : present) {
                Mask bin = Mask::make(ann.semantic_map->width, ann.semantic_map->height, 0);
                for (std::size_t k = 0; k < bin.labels.size(); ++k)
                    bin.labels[k] = ann.semantic_map->labels[k] == cls ? 1 : 0;
                annotations.push_back({{"id", next_ann_id++},
                                       {"image_id", image_id},
                                       {"category_id", cls},
                                       {"segmentation", rle_encode(bin)},
                                       {"area", bin.area()},
                                       {"iscrowd", 1}});
            }
        }
    }

    return json{{"images", images}, {"annotations", annotations}, {"categories", categories}};
}

// ---------------------------------------------------------------------------
// mask PNGs
// ---------------------------------------------------------------------------

std::vector<std::array<std::uint8_t, 3>> default_palette(std::size_t n_classes) {
    std::vector<std::array<std::uint8_t, 3>> pal;
    pal.push_back({0, 0, 0});  // background
    for (std::size_t i = 0; i < n_classes; ++i) {
        // golden-angle hue stepping gives well-separated stable colors
        const double h = std::fmod(i * 137.508, 360.0);
        const double s = 0.78, v = 0.95;
        const double c = v * s;
        const double hp = h / 60.0;
        const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
        double r = 0, g = 0, b = 0;
        if (hp < 1) { r = c; g = x; }
        else if (hp < 2) { r = x; g = c; }
        else if (hp < 3) { g = c; b = x; }
        else if (hp < 4) { g = x; b = c; }
        else if (hp < 5) { r = x; b = c; }
        else { r = c; b = x; }
        const double m = v - c;
        pal.push_back({static_cast<std::uint8_t>(std::lround((r + m) * 255)),
                       static_cast<std::uint8_t>(std::lround((g + m) * 255)),
                       static_cast<std::uint8_t>(std::lround((b + m) * 255))});
    }
    return pal;
}

std::map<std::string, std::vector<std::uint8_t>> emit_masks(
    const AnnotationSet& ann, const std::vector<std::array<std::uint8_t, 3>>& palette) {
    std::map<std::string, std::vector<std::uint8_t>> out;
    if (ann.semantic_map) {
        if (palette.size() > 256) throw TooManyClasses("semantic palette exceeds 255 classes");
        out[ann.image_id + ".png"] = encode_png_indexed(*ann.semantic_map, palette);
    }
    if (ann.masks) {
        for (const auto& m : ann.masks->masks) {
            Image bin = Image::make(m.mask.width, m.mask.height, 1);
            for (std::size_t i = 0; i < bin.data.size(); ++i)
                bin.data[i] = m.mask.labels[i] ? 255 : 0;
            out[ann.image_id + "_" + std::to_string(m.instance_id) + ".png"] = encode_png(bin);
        }
    }
    if (ann.panoptic) {
        Image rgb = Image::make(ann.panoptic->width, ann.panoptic->height, 3);
        for (std::size_t i = 0; i < ann.panoptic->ids.size(); ++i) {
            const std::uint32_t id = ann.panoptic->ids[i];
            rgb.data[i * 3 + 0] = static_cast<std::uint8_t>(id % 256);
            rgb.data[i * 3 + 1] = static_cast<std::uint8_t>((id / 256) % 256);
            rgb.data[i * 3 + 2] = static_cast<std::uint8_t>((id / 65536) % 256);
        }
        out[ann.image_id + "_panoptic.png"] = encode_png(rgb);
    }
    return out;
}

Mask decode_semantic_mask(const std::vector<std::uint8_t>& png_bytes) {
    return decode_png_indices(png_bytes);
}

PanopticMap decode_panoptic_mask(const std::vector<std::uint8_t>& png_bytes) {
    const Image rgb = decode_image(png_bytes);
    if (rgb.channels != 3) throw DecodeFailure("panoptic mask must be RGB");
    PanopticMap p;
    p.width = rgb.width;
    p.height = rgb.height;
    p.ids.resize(rgb.pixel_count());
    for (std::size_t i = 0; i < p.ids.size(); ++i)
        p.ids[i] = rgb.data[i * 3] + 256u * rgb.data[i * 3 + 1] + 65536u * rgb.data[i * 3 + 2];
    return p;
}

// ---------------------------------------------------------------------------
// annotation persistence (workspace sidecars)
// ---------------------------------------------------------------------------

json annotation_to_json(const AnnotationSet& ann) {
    json dets = json::array();
    for (const auto& d : ann.detections)
        dets.push_back({{"class", d.class_name},
                        {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                        {"confidence", d.confidence}});
    json doc{{"image_id", ann.image_id},
             {"detections", dets},
             {"flagged", ann.flagged},
             {"flag_reason", ann.flag_reason}};
    if (ann.class_label) doc["class_label"] = *ann.class_label;
    if (ann.masks) {
        json masks = json::array();
        for (const auto& m : ann.masks->masks)
            masks.push_back({{"class", m.class_name},
                             {"instance", m.instance_id},
                             {"confidence", m.confidence},
                             {"rle", rle_encode(m.mask)}});
        doc["masks"] = masks;
    }
    if (ann.semantic_map) doc["semantic_rle_classes"] = true;
    return doc;
}

AnnotationSet annotation_from_json(const json& doc) {
    AnnotationSet ann;
    ann.image_id = doc.value("image_id", "");
    ann.flagged = doc.value("flagged", false);
    ann.flag_reason = doc.value("flag_reason", "");
    if (doc.contains("class_label")) ann.class_label = doc["class_label"].get<std::string>();
    for (const auto& e : doc.value("detections", json::array())) {
        Detection d;
        d.class_name = e.value("class", "");
        d.box = {e["box"][0], e["box"][1], e["box"][2], e["box"][3]};
        d.confidence = e.value("confidence", 0.0);
        ann.detections.push_back(d);
    }
    if (doc.contains("masks")) {
        SegmentationResult res;
        for (const auto& e : doc["masks"]) {
            gateway::SegMask m;
            m.class_name = e.value("class", "");
            m.instance_id = e.value("instance", 0);
            m.confidence = e.value("confidence", 1.0);
            m.mask = rle_decode(e.at("rle"));
            res.masks.push_back(std::move(m));
        }
        ann.masks = std::move(res);
    }
    return ann;
}

}  // namespace dsa::labeling
