#include "dsa/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <thread>

#include "httplib.h"

#include "dsa/errors.hpp"
#include "dsa/image_io.hpp"
#include "dsa/rle.hpp"
#include "dsa/rng.hpp"

namespace dsa::gateway {

using nlohmann::json;

// ---------------------------------------------------------------------------
// retry wrapper
// ---------------------------------------------------------------------------

namespace {

template <class F>
auto with_retries(const BackendConfig& cfg, F&& attempt) {
    int tries = 0;
    for (;;) {
        try {
            return attempt();
        } catch (const BackendUnavailable&) {
            if (tries >= cfg.max_retries) throw;
        } catch (const BackendTimeout&) {
            if (tries >= cfg.max_retries) throw;
        }
        if (cfg.backoff_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(cfg.backoff_ms << tries));
        ++tries;
    }
}

void validate_prompts(std::span<const PromptSpec> prompts) {
    if (prompts.empty()) throw PipelineError("at least one prompt required");
    for (const auto& p : prompts)
        if (!p.valid()) throw PipelineError("invalid prompt payload");
}

}  // namespace

std::string complete_text(const TextModelHandle& handle, const std::string& prompt) {
    return with_retries(handle.config, [&] { return handle.transport->complete(prompt); });
}

std::string analyze_multimodal(const MultimodalHandle& handle,
                               const acquisition::ImageRecord& image, const std::string& prompt) {
    if (!image.pixels.valid()) throw DecodeFailure("image not decodable");
    return with_retries(handle.config, [&] { return handle.transport->analyze(image, prompt); });
}

GroundingResult ground(const GrounderHandle& handle, const acquisition::ImageRecord& image,
                       std::span<const PromptSpec> prompts) {
    validate_prompts(prompts);
    GroundingResult r =
        with_retries(handle.config, [&] { return handle.transport->ground(image, prompts); });
    for (const auto& d : r.detections) {
        if (!d.box.valid() || d.confidence < 0.0 || d.confidence > 1.0)
            throw MalformedBackendReply("grounder returned invalid detection");
    }
    std::stable_sort(r.detections.begin(), r.detections.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    return r;
}

SegmentationResult segment(const SegmenterHandle& handle, const acquisition::ImageRecord& image,
                           std::span<const PromptSpec> prompts) {
    validate_prompts(prompts);
    SegmentationResult r =
        with_retries(handle.config, [&] { return handle.transport->segment(image, prompts); });
    std::vector<int> seen;
    for (const auto& m : r.masks) {
        if (m.mask.width != image.pixels.width || m.mask.height != image.pixels.height)
            throw DimensionMismatch("segmenter mask dims differ from image");
        if (std::find(seen.begin(), seen.end(), m.instance_id) != seen.end())
            throw MalformedBackendReply("duplicate instance_id in segmentation");
        seen.push_back(m.instance_id);
    }
    return r;
}

// ---------------------------------------------------------------------------
// mock transports
// ---------------------------------------------------------------------------

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim_token(std::string s) {
    auto is_edge = [](char c) {
        return std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == ';' || c == '.' ||
               c == '"' || c == '\'' || c == ':';
    };
    while (!s.empty() && is_edge(s.front())) s.erase(s.begin());
    while (!s.empty() && is_edge(s.back())) s.pop_back();
    return s;
}

std::vector<std::string> split_class_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    std::string normalized = std::regex_replace(text, std::regex("\\band\\b"), ",");
    for (char c : normalized) {
        if (c == ',') {
            cur = trim_token(cur);
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    cur = trim_token(cur);
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Small knowledge table standing in for the LLM's world knowledge about
// well-known dataset schemas.
const std::map<std::string, std::vector<std::string>>& known_dataset_classes() {
    static const std::map<std::string, std::vector<std::string>> k = {
        {"cifar-10",
         {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship",
          "truck"}},
        {"stl-10",
         {"airplane", "car", "bird", "cat", "deer", "dog", "monkey", "horse", "ship", "truck"}},
    };
    return k;
}

}  // namespace

json mock_extract_demand(const std::string& demand) {
    const std::string d = lower(demand);
    json out;

    static const char* topical[] = {"dataset", "image",  "classif", "detect", "segment",
                                    "expand",  "build",  "create",  "label",  "annotate",
                                    "corpus",  "class"};
    bool relevant = false;
    for (const char* t : topical)
        if (d.find(t) != std::string::npos) relevant = true;
    if (!relevant) return json{{"relevant", false}};
    out["relevant"] = true;

    const bool is_expand = d.find("expand") != std::string::npos;
    out["task_kind"] = is_expand ? "expand" : "build";

    std::string task_type = "classification";
    if (d.find("panoptic") != std::string::npos) task_type = "panoptic_segmentation";
    else if (d.find("instance seg") != std::string::npos) task_type = "instance_segmentation";
    else if (d.find("semantic seg") != std::string::npos || d.find("segmentation") != std::string::npos)
        task_type = "semantic_segmentation";
    else if (d.find("detect") != std::string::npos) task_type = "detection";
    out["task_type"] = task_type;

    // dataset name
    std::string name;
    {
        std::smatch m;
        if (std::regex_search(d, m, std::regex("(?:named|called)\\s+([a-z0-9_\\-\\.]+)")))
            name = trim_token(m[1].str());
        else if (is_expand &&
                 std::regex_search(d, m, std::regex("expand(?:\\s+an?)?(?:\\s+image)?(?:\\s+dataset)?\\s+([a-z0-9_\\-\\.]+)")))
            name = trim_token(m[1].str());
        static const std::set<std::string> stopwords = {"this", "that", "the", "my",
                                                        "it",   "an",   "a",   "dataset"};
        if (stopwords.count(name)) name.clear();
    }
    if (name.empty()) name = is_expand ? "dataset" : "new-dataset";
    out["dataset_name"] = name;

    // classes: explicit "classes: a, b, c" list, "N-class task: a, b, c",
    // or the known schema of a well-known dataset
    std::vector<std::string> classes;
    {
        std::smatch m;
        if (std::regex_search(d, m, std::regex("classes\\s*(?:are)?\\s*:\\s*([^;\\n]+)")))
            classes = split_class_list(m[1].str());
        else if (std::regex_search(d, m, std::regex("\\d+-class[^:\\n]*:\\s*([^;\\n]+)")))
            classes = split_class_list(m[1].str());
        else if (auto it = known_dataset_classes().find(name); it != known_dataset_classes().end())
            classes = it->second;
    }
    out["classes"] = json::array();
    for (const auto& c : classes) {
        // fixture grammar: "name/synonym1/synonym2"
        json cls;
        const auto parts = [&] {
            std::vector<std::string> p;
            std::string cur;
            for (char ch : c) {
                if (ch == '/') {
                    p.push_back(trim_token(cur));
                    cur.clear();
                } else
                    cur += ch;
            }
            p.push_back(trim_token(cur));
            return p;
        }();
        cls["name"] = parts[0];
        cls["synonyms"] = json::array();
        for (std::size_t i = 1; i < parts.size(); ++i) cls["synonyms"].push_back(parts[i]);
        out["classes"].push_back(cls);
    }

    // per-class image count
    {
        std::smatch m;
        if (std::regex_search(d, m, std::regex("(\\d+)\\s+images?\\s+(?:each|per)")))
            out["per_class_target"] = std::stoul(m[1].str());
        else if (std::regex_search(d, m, std::regex("(\\d+)\\s*images?/class")))
            out["per_class_target"] = std::stoul(m[1].str());
        else if (std::regex_search(d, m, std::regex("add\\s+(\\d+)")))
            out["per_class_target"] = std::stoul(m[1].str());
        else
            out["per_class_target"] = 10;  // a sensible default the backend would pick
    }

    {
        std::smatch m;
        if (std::regex_search(d, m, std::regex("(\\d+)\\s*[x×]\\s*(\\d+)")))
            out["target_resolution"] = json::array({std::stoi(m[1].str()), std::stoi(m[2].str())});
    }

    {
        std::smatch m;
        if (std::regex_search(d, m, std::regex("formats?\\s*:\\s*([^;\\n]+)"))) {
            json fmts = json::array();
            for (const auto& f : split_class_list(m[1].str())) fmts.push_back(f);
            out["annotation_formats"] = fmts;
        }
    }

    json missing = json::array();
    if (!is_expand && classes.empty()) missing.push_back("classes");
    out["missing"] = missing;
    return out;
}

std::string MockTextTransport::complete(const std::string& prompt) {
    ++calls_;
    if (!scripted_.empty()) {
        std::string r = scripted_.front();
        scripted_.erase(scripted_.begin());
        return r;
    }
    for (const auto& [key, reply] : keyed_)
        if (prompt.find(key) != std::string::npos) return reply;

    const auto marker = prompt.find("USER DEMAND:");
    if (marker != std::string::npos) {
        std::string demand = prompt.substr(marker + 12);
        const auto end = demand.find("END DEMAND");
        if (end != std::string::npos) demand.resize(end);
        return mock_extract_demand(demand).dump(2);
    }
    if (prompt.find("FAILURE CONTEXT:") != std::string::npos)
        return json{{"resolution", "Restart"}}.dump();

    // canned reply keyed by prompt hash
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(rng::fnv1a(prompt)));
    return std::string("mock-reply-") + buf;
}

json load_sidecar(const acquisition::ImageRecord& image) {
    const std::filesystem::path p = image.origin_uri + ".json";
    std::ifstream in(p);
    if (!in) return json();
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) return json();
    return doc;
}

std::string MockMultimodalTransport::analyze(const acquisition::ImageRecord& image,
                                             const std::string&) {
    const json sidecar = load_sidecar(image);
    if (sidecar.is_object() && sidecar.contains("analysis")) return sidecar["analysis"].dump(2);

    // no ground truth: emit a syntactically valid analysis that will not
    // qualify, so unknown images are rejected rather than mislabeled
    char res[32];
    std::snprintf(res, sizeof(res), "%dx%d", image.pixels.width, image.pixels.height);
    json a{
        {"image_id", image.id},
        {"target_category", "unknown"},
        {"instance_count", 0},
        {"fine_grained_attributes", json::object()},
        {"background_composition", {{"scene_type", "unknown"}, {"background_distribution", json::object()}}},
        {"viewpoint_conditions",
         {{"camera_angle", "unknown"},
          {"camera_elevation", "unknown"},
          {"lighting", "unknown"},
          {"light_direction_vector", {0.0, 0.0}},
          {"depth", "unknown"}}},
        {"image_quality",
         {{"resolution", res},
          {"sharpness_score", 0.5},
          {"color_fidelity", "high"},
          {"detail_completeness", 50.0},
          {"style_consistency", "unknown"},
          {"jpeg_artifacts", false}}},
        {"semantic_alignment",
         {{"class_prototype", "unknown"},
          {"similarity_score", 0.0},
          {"match_features", json::array()},
          {"alignment_vector_diff", json::object()}}},
        {"quality_risks",
         {{"occlusion_detected", false},
          {"occlusion_level", 0.0},
          {"blur_score", 0.0},
          {"exposure_abnormality", false},
          {"viewpoint_deviation_score", 0.0},
          {"noise_level", "low"},
          {"warnings", json::array()},
          {"total_risk_score", 0.0}}},
        {"decision",
         {{"qualified", false}, {"confidence", 0.0}, {"reason", "no reference for this image"}}},
    };
    return a.dump(2);
}

namespace {

Detection detection_from_json(const json& e) {
    Detection d;
    d.class_name = e.value("class", "");
    const auto& b = e.at("box");
    d.box = NormalizedBox{b.at(0), b.at(1), b.at(2), b.at(3)};
    d.confidence = e.value("confidence", 0.0);
    return d;
}

}  // namespace

GroundingResult MockGroundTransport::ground(const acquisition::ImageRecord& image,
                                            std::span<const PromptSpec> prompts) {
    const json sidecar = load_sidecar(image);
    GroundingResult out;
    if (!sidecar.is_object()) return out;
    for (const auto& p : prompts) {
        if (p.kind == PromptSpec::Kind::Text && sidecar.contains("detections")) {
            const std::string needle = lower(p.text);
            for (const auto& e : sidecar["detections"]) {
                const Detection d = detection_from_json(e);
                if (needle.find(lower(d.class_name)) != std::string::npos)
                    out.detections.push_back(d);
            }
        } else if (p.kind == PromptSpec::Kind::Box && sidecar.contains("refined")) {
            for (const auto& e : sidecar["refined"]) {
                const Detection d = detection_from_json(e);
                if (iou(d.box, p.box) > 0.5) out.detections.push_back(d);
            }
        }
    }
    std::stable_sort(out.detections.begin(), out.detections.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    return out;
}

SegmentationResult MockSegmentTransport::segment(const acquisition::ImageRecord& image,
                                                 std::span<const PromptSpec>) {
    const json sidecar = load_sidecar(image);
    SegmentationResult out;
    if (!sidecar.is_object() || !sidecar.contains("masks")) return out;
    for (const auto& e : sidecar["masks"]) {
        SegMask m;
        m.class_name = e.value("class", "");
        m.instance_id = e.value("instance", 0);
        m.confidence = e.value("confidence", 1.0);
        m.mask = rle_decode(e.at("rle"));
        out.masks.push_back(std::move(m));
    }
    return out;
}

Gateway make_mock_gateway() {
    Gateway g;
    BackendConfig cfg;
    cfg.endpoint = "mock://local";
    cfg.model = "mock";
    cfg.backoff_ms = 0;
    g.text = {cfg, std::make_shared<MockTextTransport>()};
    g.multimodal = {cfg, std::make_shared<MockMultimodalTransport>()};
    g.grounder = {cfg, std::make_shared<MockGroundTransport>()};
    g.segmenter = {cfg, std::make_shared<MockSegmentTransport>()};
    return g;
}

// ---------------------------------------------------------------------------
// HTTP transports
// ---------------------------------------------------------------------------

namespace {

std::string base64_encode(std::span<const std::uint8_t> in) {
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= in.size(); i += 3) {
        const std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += tbl[v & 63];
    }
    if (i + 1 == in.size()) {
        const std::uint32_t v = in[i] << 16;
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == in.size()) {
        const std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8);
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

struct SplitUrl {
    std::string base;  // scheme://host:port
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) return {url, "/"};
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

json http_post_json(const BackendConfig& cfg, const json& body) {
    if (cfg.endpoint.empty()) throw BackendUnavailable("no endpoint configured");
    const SplitUrl u = split_url(cfg.endpoint);
    httplib::Client cli(u.base);
    cli.set_connection_timeout(0, cfg.timeout_ms * 1000);
    cli.set_read_timeout(cfg.timeout_ms / 1000, (cfg.timeout_ms % 1000) * 1000);
    if (const char* key = std::getenv("DATASETAGENT_API_KEY"))
        cli.set_default_headers({{"Authorization", std::string("Bearer ") + key}});
    auto res = cli.Post(u.path, body.dump(), "application/json");
    if (!res) {
        if (res.error() == httplib::Error::ConnectionTimeout ||
            res.error() == httplib::Error::Read)
            throw BackendTimeout("backend timed out: " + cfg.endpoint);
        throw BackendUnavailable("backend unreachable: " + cfg.endpoint);
    }
    if (res->status != 200)
        throw BackendUnavailable("backend status " + std::to_string(res->status));
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) throw MalformedBackendReply("backend reply is not JSON");
    return doc;
}

json image_payload(const acquisition::ImageRecord& image) {
    return base64_encode(encode_png(image.pixels));
}

json prompts_payload(std::span<const PromptSpec> prompts) {
    json arr = json::array();
    for (const auto& p : prompts) {
        json e;
        switch (p.kind) {
            case PromptSpec::Kind::Text:
                e = {{"type", "text"}, {"text", p.text}};
                break;
            case PromptSpec::Kind::Point:
                e = {{"type", "point"}, {"point", {p.point.x, p.point.y}}};
                break;
            case PromptSpec::Kind::Box:
                e = {{"type", "box"}, {"box", {p.box.x1, p.box.y1, p.box.x2, p.box.y2}}};
                break;
        }
        arr.push_back(e);
    }
    return arr;
}

class HttpTextTransport : public TextTransport {
public:
    explicit HttpTextTransport(BackendConfig cfg) : cfg_(std::move(cfg)) {}
    std::string complete(const std::string& prompt) override {
        const json reply = http_post_json(cfg_, {{"model", cfg_.model}, {"prompt", prompt}});
        if (!reply.contains("text")) throw MalformedBackendReply("missing 'text' field");
        return reply["text"];
    }

private:
    BackendConfig cfg_;
};

class HttpMultimodalTransport : public MultimodalTransport {
public:
    explicit HttpMultimodalTransport(BackendConfig cfg) : cfg_(std::move(cfg)) {}
    std::string analyze(const acquisition::ImageRecord& image, const std::string& prompt) override {
        const json reply = http_post_json(cfg_, {{"model", cfg_.model},
                                                 {"prompt", prompt},
                                                 {"image_png_b64", image_payload(image)}});
        if (!reply.contains("text")) throw MalformedBackendReply("missing 'text' field");
        return reply["text"];
    }

private:
    BackendConfig cfg_;
};

class HttpGroundTransport : public GroundTransport {
public:
    explicit HttpGroundTransport(BackendConfig cfg) : cfg_(std::move(cfg)) {}
    GroundingResult ground(const acquisition::ImageRecord& image,
                           std::span<const PromptSpec> prompts) override {
        const json reply = http_post_json(cfg_, {{"model", cfg_.model},
                                                 {"prompts", prompts_payload(prompts)},
                                                 {"image_png_b64", image_payload(image)}});
        if (!reply.contains("detections")) throw MalformedBackendReply("missing 'detections'");
        GroundingResult out;
        for (const auto& e : reply["detections"]) out.detections.push_back(detection_from_json(e));
        return out;
    }

private:
    BackendConfig cfg_;
};

class HttpSegmentTransport : public SegmentTransport {
public:
    explicit HttpSegmentTransport(BackendConfig cfg) : cfg_(std::move(cfg)) {}
    SegmentationResult segment(const acquisition::ImageRecord& image,
                               std::span<const PromptSpec> prompts) override {
        const json reply = http_post_json(cfg_, {{"model", cfg_.model},
                                                 {"prompts", prompts_payload(prompts)},
                                                 {"image_png_b64", image_payload(image)}});
        if (!reply.contains("masks")) throw MalformedBackendReply("missing 'masks'");
        SegmentationResult out;
        for (const auto& e : reply["masks"]) {
            SegMask m;
            m.class_name = e.value("class", "");
            m.instance_id = e.value("instance", 0);
            m.confidence = e.value("confidence", 1.0);
            m.mask = rle_decode(e.at("rle"));
            out.masks.push_back(std::move(m));
        }
        return out;
    }

private:
    BackendConfig cfg_;
};

std::string env_or(const char* name, const std::map<std::string, std::string>& overrides,
                   const std::string& key) {
    if (auto it = overrides.find(key); it != overrides.end()) return it->second;
    if (const char* v = std::getenv(name)) return v;
    return {};
}

}  // namespace

Gateway make_http_gateway(const std::map<std::string, std::string>& endpoint_overrides) {
    Gateway g;
    BackendConfig cfg;
    cfg.endpoint = env_or("DATASETAGENT_TEXT_ENDPOINT", endpoint_overrides, "text");
    cfg.model = env_or("DATASETAGENT_TEXT_MODEL", endpoint_overrides, "text_model");
    g.text = {cfg, std::make_shared<HttpTextTransport>(cfg)};
    cfg.endpoint = env_or("DATASETAGENT_MM_ENDPOINT", endpoint_overrides, "mm");
    cfg.model = env_or("DATASETAGENT_MM_MODEL", endpoint_overrides, "mm_model");
    g.multimodal = {cfg, std::make_shared<HttpMultimodalTransport>(cfg)};
    cfg.endpoint = env_or("DATASETAGENT_GROUND_ENDPOINT", endpoint_overrides, "ground");
    cfg.model = env_or("DATASETAGENT_GROUND_MODEL", endpoint_overrides, "ground_model");
    g.grounder = {cfg, std::make_shared<HttpGroundTransport>(cfg)};
    cfg.endpoint = env_or("DATASETAGENT_SEG_ENDPOINT", endpoint_overrides, "seg");
    cfg.model = env_or("DATASETAGENT_SEG_MODEL", endpoint_overrides, "seg_model");
    g.segmenter = {cfg, std::make_shared<HttpSegmentTransport>(cfg)};
    return g;
}

}  // namespace dsa::gateway
