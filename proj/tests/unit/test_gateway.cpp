#include "doctest.h"

#include "dsa/errors.hpp"
#include "dsa/gateway.hpp"
#include "dsa/rle.hpp"

#include "../support/fixtures.hpp"

using namespace dsa;
using namespace dsa::gateway;

namespace {

// single fixture image + sidecar for the mock transports
struct SidecarFixture {
    fixtures::TempDir tmp;
    acquisition::ImageRecord record;

    explicit SidecarFixture(const nlohmann::json& sidecar, int w = 32, int h = 32) {
        const auto file = tmp.path() / "img_000.png";
        record.pixels = fixtures::textured_image(w, h, 1234);
        save_png(file, record.pixels);
        fixtures::write_json_file(std::filesystem::path(file.string() + ".json"), sidecar);
        record.id = "img_000";
        record.origin_uri = file.string();
        record.source_id = "fixture";
    }
};

struct CountingTextTransport : TextTransport {
    int calls = 0;
    int fail_first = 0;
    std::string complete(const std::string&) override {
        ++calls;
        if (calls <= fail_first) throw BackendUnavailable("down");
        return "ok";
    }
};

}  // namespace

TEST_SUITE_BEGIN("gateway");

TEST_CASE("mock text replies are canned by prompt and stable across instances") {
    MockTextTransport a, b;
    const std::string r1 = a.complete("prompt one");
    CHECK(r1 == a.complete("prompt one"));
    CHECK(r1 == b.complete("prompt one"));
    CHECK(r1 != a.complete("prompt two"));
}

TEST_CASE("retry budget is observed exactly") {
    auto counting = std::make_shared<CountingTextTransport>();
    BackendConfig cfg;
    cfg.max_retries = 2;
    cfg.backoff_ms = 0;
    TextModelHandle handle{cfg, counting};

    SUBCASE("success after two failures uses all three attempts") {
        counting->fail_first = 2;
        CHECK(complete_text(handle, "x") == "ok");
        CHECK(counting->calls == 3);
    }
    SUBCASE("persistent failure stops after retries+1 attempts") {
        counting->fail_first = 1000;
        CHECK_THROWS_AS(complete_text(handle, "x"), BackendUnavailable);
        CHECK(counting->calls == 3);
    }
    SUBCASE("zero retries means a single attempt") {
        counting->fail_first = 1000;
        handle.config.max_retries = 0;
        CHECK_THROWS_AS(complete_text(handle, "x"), BackendUnavailable);
        CHECK(counting->calls == 1);
    }
}

TEST_CASE("unconfigured http gateway raises BackendUnavailable after retries") {
    Gateway gw = make_http_gateway({{"text", ""}, {"mm", ""}, {"ground", ""}, {"seg", ""}});
    gw.text.config.max_retries = 1;
    gw.text.config.backoff_ms = 0;
    CHECK_THROWS_AS(complete_text(gw.text, "hello"), BackendUnavailable);
}

TEST_CASE("mock multimodal returns the sidecar analysis verbatim") {
    const auto analysis = fixtures::make_analysis("cat", 32, 32, 0.9, 0.05, true, 0.95);
    SidecarFixture fx(nlohmann::json{{"analysis", analysis}});
    MultimodalHandle handle{BackendConfig{}, std::make_shared<MockMultimodalTransport>()};
    const auto pixels_before = fx.record.pixels.data;
    const std::string raw = analyze_multimodal(handle, fx.record, "analyze");
    CHECK(nlohmann::json::parse(raw) == analysis);
    // identical inputs, identical bytes; the gateway never mutates images
    CHECK(raw == analyze_multimodal(handle, fx.record, "analyze"));
    CHECK(fx.record.pixels.data == pixels_before);
}

TEST_CASE("fox sidecar values pass through the gateway untouched") {
    SidecarFixture fx(nlohmann::json{{"analysis", fixtures::fox_analysis()}});
    MultimodalHandle handle{BackendConfig{}, std::make_shared<MockMultimodalTransport>()};
    const auto doc = nlohmann::json::parse(analyze_multimodal(handle, fx.record, "analyze"));
    CHECK(doc["target_category"] == "Fox");
    CHECK(doc["semantic_alignment"]["similarity_score"] == doctest::Approx(0.931));
}

TEST_CASE("undecodable images are refused before any backend call") {
    acquisition::ImageRecord rec;  // empty pixel buffer
    rec.id = "broken";
    MultimodalHandle handle{BackendConfig{}, std::make_shared<MockMultimodalTransport>()};
    CHECK_THROWS_AS(analyze_multimodal(handle, rec, "analyze"), DecodeFailure);
}

TEST_CASE("mock multimodal without sidecar yields a non-qualifying analysis") {
    fixtures::TempDir tmp;
    acquisition::ImageRecord rec;
    rec.pixels = fixtures::textured_image(16, 16, 5);
    rec.id = "lonely";
    rec.origin_uri = (tmp.path() / "lonely.png").string();
    save_png(rec.origin_uri, rec.pixels);
    MultimodalHandle handle{BackendConfig{}, std::make_shared<MockMultimodalTransport>()};
    const auto doc = nlohmann::json::parse(analyze_multimodal(handle, rec, "analyze"));
    CHECK(doc["decision"]["qualified"] == false);
    CHECK(doc["semantic_alignment"]["similarity_score"] == 0.0);
}

TEST_CASE("mock grounder filters by prompt text and sorts by confidence") {
    nlohmann::json sidecar{
        {"detections",
         {{{"class", "cat"}, {"box", {0.1, 0.1, 0.4, 0.4}}, {"confidence", 0.6}},
          {{"class", "cat"}, {"box", {0.5, 0.5, 0.9, 0.9}}, {"confidence", 0.9}},
          {{"class", "dog"}, {"box", {0.2, 0.6, 0.5, 0.9}}, {"confidence", 0.8}}}}};
    SidecarFixture fx(sidecar);
    GrounderHandle handle{BackendConfig{}, std::make_shared<MockGroundTransport>()};

    const std::vector<PromptSpec> prompts{PromptSpec::text_prompt("cat")};
    const GroundingResult res = ground(handle, fx.record, prompts);
    REQUIRE(res.detections.size() == 2);
    CHECK(res.detections[0].confidence == doctest::Approx(0.9));
    CHECK(res.detections[1].confidence == doctest::Approx(0.6));
    for (const auto& d : res.detections) CHECK(d.class_name == "cat");
}

TEST_CASE("empty prompt list is a precondition error") {
    SidecarFixture fx(nlohmann::json::object());
    GrounderHandle handle{BackendConfig{}, std::make_shared<MockGroundTransport>()};
    CHECK_THROWS_AS(ground(handle, fx.record, {}), PipelineError);
    SegmenterHandle seg{BackendConfig{}, std::make_shared<MockSegmentTransport>()};
    CHECK_THROWS_AS(segment(seg, fx.record, {}), PipelineError);
}

TEST_CASE("box prompts replay the refined sidecar entries by overlap") {
    nlohmann::json sidecar{
        {"refined",
         {{{"class", "cat"}, {"box", {0.1, 0.1, 0.42, 0.42}}, {"confidence", 0.85}},
          {{"class", "cat"}, {"box", {0.6, 0.6, 0.9, 0.9}}, {"confidence", 0.7}}}}};
    SidecarFixture fx(sidecar);
    GrounderHandle handle{BackendConfig{}, std::make_shared<MockGroundTransport>()};
    const std::vector<PromptSpec> prompts{PromptSpec::box_prompt({0.1, 0.1, 0.4, 0.4})};
    const GroundingResult res = ground(handle, fx.record, prompts);
    REQUIRE(res.detections.size() == 1);
    CHECK(res.detections[0].confidence == doctest::Approx(0.85));
}

TEST_CASE("mock segmenter decodes sidecar masks with distinct instance ids") {
    Mask m1 = Mask::make(32, 32, 0), m2 = Mask::make(32, 32, 0);
    for (int i = 0; i < 16; ++i) m1.labels[i] = 1;
    for (int i = 100; i < 140; ++i) m2.labels[i] = 1;
    nlohmann::json sidecar{
        {"masks",
         {{{"class", "cat"}, {"instance", 1}, {"confidence", 0.9}, {"rle", rle_encode(m1)}},
          {{"class", "cat"}, {"instance", 2}, {"confidence", 0.8}, {"rle", rle_encode(m2)}}}}};
    SidecarFixture fx(sidecar);
    SegmenterHandle handle{BackendConfig{}, std::make_shared<MockSegmentTransport>()};
    const std::vector<PromptSpec> prompts{PromptSpec::text_prompt("cat")};
    const SegmentationResult res = segment(handle, fx.record, prompts);
    REQUIRE(res.masks.size() == 2);
    CHECK(res.masks[0].instance_id != res.masks[1].instance_id);
    CHECK(res.masks[0].mask.labels == m1.labels);
    CHECK(res.masks[1].mask.labels == m2.labels);
}

TEST_CASE("segmenter masks with wrong dimensions are rejected") {
    Mask wrong = Mask::make(16, 16, 1);  // image is 32x32
    nlohmann::json sidecar{
        {"masks",
         {{{"class", "cat"}, {"instance", 1}, {"confidence", 0.9}, {"rle", rle_encode(wrong)}}}}};
    SidecarFixture fx(sidecar);
    SegmenterHandle handle{BackendConfig{}, std::make_shared<MockSegmentTransport>()};
    const std::vector<PromptSpec> prompts{PromptSpec::text_prompt("cat")};
    CHECK_THROWS_AS(segment(handle, fx.record, prompts), DimensionMismatch);
}

TEST_CASE("duplicate instance ids from the backend are malformed") {
    Mask m = Mask::make(32, 32, 1);
    nlohmann::json sidecar{
        {"masks",
         {{{"class", "a"}, {"instance", 1}, {"rle", rle_encode(m)}},
          {{"class", "b"}, {"instance", 1}, {"rle", rle_encode(m)}}}}};
    SidecarFixture fx(sidecar);
    SegmenterHandle handle{BackendConfig{}, std::make_shared<MockSegmentTransport>()};
    const std::vector<PromptSpec> prompts{PromptSpec::text_prompt("a")};
    CHECK_THROWS_AS(segment(handle, fx.record, prompts), MalformedBackendReply);
}

TEST_SUITE_END();
