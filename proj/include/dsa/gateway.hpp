#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsa/acquisition.hpp"
#include "dsa/geometry.hpp"
#include "dsa/image.hpp"

// Uniform handles for the external model services (text model, multimodal
// analyzer, grounder, segmenter). Real backends speak a single-request JSON
// protocol over HTTP; the mock transports replay per-image sidecar documents
// and are pure functions of (fixture, prompt), which keeps the whole test
// suite deterministic and offline.
namespace dsa::gateway {

struct BackendConfig {
    std::string endpoint;  // http://host:port/path
    std::string model;
    int timeout_ms = 30000;
    int max_retries = 2;
    int backoff_ms = 100;  // exponential base between retry attempts
};

struct PromptSpec {
    enum class Kind { Text, Point, Box };
    Kind kind = Kind::Text;
    std::string text;
    NormalizedPoint point;
    NormalizedBox box;

    static PromptSpec text_prompt(std::string t) {
        PromptSpec p;
        p.kind = Kind::Text;
        p.text = std::move(t);
        return p;
    }
    static PromptSpec box_prompt(const NormalizedBox& b) {
        PromptSpec p;
        p.kind = Kind::Box;
        p.box = b;
        return p;
    }
    bool valid() const {
        if (kind == Kind::Point) return point.valid();
        if (kind == Kind::Box) return box.valid();
        return !text.empty();
    }
};

struct Detection {
    std::string class_name;
    NormalizedBox box;
    double confidence = 0.0;
};

struct GroundingResult {
    std::vector<Detection> detections;  // ordered by descending confidence
};

struct SegMask {
    std::string class_name;
    int instance_id = 0;
    Mask mask;  // binary, source image dimensions
    double confidence = 0.0;
};

struct SegmentationResult {
    std::vector<SegMask> masks;
};

// --- transports: one attempt, no retry policy --------------------------------

class TextTransport {
public:
    virtual ~TextTransport() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

class MultimodalTransport {
public:
    virtual ~MultimodalTransport() = default;
    virtual std::string analyze(const acquisition::ImageRecord& image,
                                const std::string& prompt) = 0;
};

class GroundTransport {
public:
    virtual ~GroundTransport() = default;
    virtual GroundingResult ground(const acquisition::ImageRecord& image,
                                   std::span<const PromptSpec> prompts) = 0;
};

class SegmentTransport {
public:
    virtual ~SegmentTransport() = default;
    virtual SegmentationResult segment(const acquisition::ImageRecord& image,
                                       std::span<const PromptSpec> prompts) = 0;
};

// --- handles: immutable, shareable across workers ----------------------------

struct TextModelHandle {
    BackendConfig config;
    std::shared_ptr<TextTransport> transport;
};
struct MultimodalHandle {
    BackendConfig config;
    std::shared_ptr<MultimodalTransport> transport;
};
struct GrounderHandle {
    BackendConfig config;
    std::shared_ptr<GroundTransport> transport;
};
struct SegmenterHandle {
    BackendConfig config;
    std::shared_ptr<SegmentTransport> transport;
};

// Retrying ops. BackendUnavailable/BackendTimeout trigger up to
// config.max_retries additional attempts with exponential backoff.
std::string complete_text(const TextModelHandle& handle, const std::string& prompt);
std::string analyze_multimodal(const MultimodalHandle& handle,
                               const acquisition::ImageRecord& image, const std::string& prompt);
GroundingResult ground(const GrounderHandle& handle, const acquisition::ImageRecord& image,
                       std::span<const PromptSpec> prompts);
SegmentationResult segment(const SegmenterHandle& handle, const acquisition::ImageRecord& image,
                           std::span<const PromptSpec> prompts);

struct Gateway {
    TextModelHandle text;
    MultimodalHandle multimodal;
    GrounderHandle grounder;
    SegmenterHandle segmenter;
};

// --- mock transports ----------------------------------------------------------

// Scripted replies win, then substring-keyed replies, then built-in rules
// (demand extraction, diagnosis), then a canned reply keyed by prompt hash.
class MockTextTransport : public TextTransport {
public:
    std::string complete(const std::string& prompt) override;
    void push_reply(std::string reply) { scripted_.push_back(std::move(reply)); }
    void set_keyed_reply(std::string key_substring, std::string reply) {
        keyed_.emplace_back(std::move(key_substring), std::move(reply));
    }
    int calls() const { return calls_; }

private:
    std::vector<std::string> scripted_;
    std::vector<std::pair<std::string, std::string>> keyed_;
    int calls_ = 0;
};

// Deterministic rule-based demand extraction used by the mock text model.
// Exposed so tests can call it directly.
nlohmann::json mock_extract_demand(const std::string& demand);

class MockMultimodalTransport : public MultimodalTransport {
public:
    std::string analyze(const acquisition::ImageRecord& image, const std::string& prompt) override;
};

class MockGroundTransport : public GroundTransport {
public:
    GroundingResult ground(const acquisition::ImageRecord& image,
                           std::span<const PromptSpec> prompts) override;
};

class MockSegmentTransport : public SegmentTransport {
public:
    SegmentationResult segment(const acquisition::ImageRecord& image,
                               std::span<const PromptSpec> prompts) override;
};

// Sidecar document lookup shared by the mock transports: <origin_uri>.json
nlohmann::json load_sidecar(const acquisition::ImageRecord& image);

Gateway make_mock_gateway();
// Endpoints from config keys or the DATASETAGENT_{TEXT,MM,GROUND,SEG}_ENDPOINT
// environment variables.
Gateway make_http_gateway(const std::map<std::string, std::string>& endpoint_overrides = {});

}  // namespace dsa::gateway
