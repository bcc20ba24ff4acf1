#include "doctest.h"

#include "dsa/errors.hpp"
#include "dsa/intake.hpp"

#include "../support/fixtures.hpp"

using namespace dsa;
using namespace dsa::intake;

namespace {

gateway::TextModelHandle mock_text() {
    gateway::BackendConfig cfg;
    cfg.backoff_ms = 0;
    return {cfg, std::make_shared<gateway::MockTextTransport>()};
}

gateway::MockTextTransport& transport_of(gateway::TextModelHandle& h) {
    return *static_cast<gateway::MockTextTransport*>(h.transport.get());
}

DatasetSpec parse_ok(const std::string& demand, gateway::TextModelHandle& handle) {
    auto r = parse_demand(demand, handle, PromptLibrary::builtin());
    REQUIRE(std::holds_alternative<DatasetSpec>(r));
    return std::get<DatasetSpec>(r);
}

}  // namespace

TEST_SUITE_BEGIN("intake");

TEST_CASE("expanding a well-known dataset yields its full schema") {
    auto handle = mock_text();
    const DatasetSpec spec =
        parse_ok("I want to expand an image dataset called CIFAR-10. Add 5000 images each label.",
                 handle);
    CHECK(spec.task_kind == TaskKind::Expand);
    CHECK(spec.task_type == TaskType::Classification);
    CHECK(spec.classes.size() == 10);
    CHECK(spec.per_class_target == 5000);
    CHECK(spec.name == "cifar-10");
}

TEST_CASE("a canned extraction round-trips into a detection spec") {
    auto handle = mock_text();
    transport_of(handle).push_reply(nlohmann::json{
        {"relevant", true},
        {"task_kind", "build"},
        {"task_type", "detection"},
        {"dataset_name", "pets"},
        {"classes",
         {{{"name", "cat"}, {"synonyms", {"kitty"}}},
          {{"name", "dog"}, {"synonyms", nlohmann::json::array()}},
          {{"name", "bird"}, {"synonyms", nlohmann::json::array()}}}},
        {"per_class_target", 25},
        {"missing", nlohmann::json::array()}}.dump());
    const DatasetSpec spec = parse_ok("build 3-class detector: cat, dog, bird", handle);
    CHECK(spec.task_kind == TaskKind::Build);
    CHECK(spec.task_type == TaskType::Detection);
    REQUIRE(spec.classes.size() == 3);
    CHECK(spec.classes[0].name == "cat");
    CHECK(spec.classes[0].synonyms == std::vector<std::string>{"kitty"});
    CHECK(validate_spec(spec).empty());
}

TEST_CASE("the builtin extractor handles the detector phrasing too") {
    auto handle = mock_text();
    const DatasetSpec spec = parse_ok("build 3-class detector: cat, dog, bird", handle);
    CHECK(spec.task_type == TaskType::Detection);
    REQUIRE(spec.classes.size() == 3);
    CHECK(spec.classes[2].name == "bird");
}

TEST_CASE("empty demand violates the precondition") {
    auto handle = mock_text();
    CHECK_THROWS_AS(parse_demand("", handle, PromptLibrary::builtin()), PipelineError);
}

TEST_CASE("off-topic demands are rejected as irrelevant") {
    auto handle = mock_text();
    CHECK_THROWS_AS(parse_ok("what is the weather tomorrow in Paris?", handle), IrrelevantDemand);
}

TEST_CASE("two malformed replies exhaust the repair retry") {
    auto handle = mock_text();
    transport_of(handle).push_reply("this is not json at all");
    transport_of(handle).push_reply("{\"still\": \"wrong\"}");
    CHECK_THROWS_AS(parse_ok("build a dataset; classes: a, b", handle), MalformedBackendReply);
    CHECK(transport_of(handle).calls() == 2);  // initial + one repair
}

TEST_CASE("a single malformed reply is repaired on retry") {
    auto handle = mock_text();
    transport_of(handle).push_reply("garbage");
    // second call falls through to the builtin extractor, which succeeds
    const DatasetSpec spec = parse_ok("build a classification dataset; classes: a, b; 5 images each",
                                      handle);
    CHECK(spec.classes.size() == 2);
    CHECK(transport_of(handle).calls() == 2);
}

TEST_CASE("missing class lists come back as a clarification request") {
    auto handle = mock_text();
    auto r = parse_demand("build a classification dataset of 10 images each", handle,
                          PromptLibrary::builtin());
    REQUIRE(std::holds_alternative<ClarificationRequest>(r));
    const auto& req = std::get<ClarificationRequest>(r);
    REQUIRE(req.missing.size() == 1);
    CHECK(req.missing[0] == "classes");
}

TEST_CASE("clarification loop terminates once the answer arrives") {
    auto handle = mock_text();
    std::string demand = "build a classification dataset of 10 images each";
    auto r1 = parse_demand(demand, handle, PromptLibrary::builtin());
    REQUIRE(std::holds_alternative<ClarificationRequest>(r1));
    demand += "\nclasses: red, green, blue";
    auto r2 = parse_demand(demand, handle, PromptLibrary::builtin());
    REQUIRE(std::holds_alternative<DatasetSpec>(r2));
    CHECK(std::get<DatasetSpec>(r2).classes.size() == 3);
}

TEST_CASE("any spec produced by parse_demand validates cleanly") {
    auto handle = mock_text();
    const char* demands[] = {
        "build a classification dataset named x; classes: a, b, c; 7 images per class",
        "build a detection dataset; classes: cat/feline, dog; 3 images each; resolution 64x64",
        "build a semantic segmentation dataset; classes: road, sky; 4 images per class",
        "build a panoptic segmentation dataset; classes: thing, stuff; 2 images each",
        "expand CIFAR-10, add 100 images each label",
    };
    for (const char* d : demands) {
        auto r = parse_demand(d, handle, PromptLibrary::builtin());
        REQUIRE(std::holds_alternative<DatasetSpec>(r));
        DatasetSpec spec = std::get<DatasetSpec>(r);
        if (spec.task_kind == TaskKind::Expand) spec.existing_root = "/tmp/somewhere";
        CHECK(validate_spec(spec).empty());
    }
}

TEST_CASE("validate_spec names each broken rule") {
    DatasetSpec spec;
    spec.task_kind = TaskKind::Build;
    spec.per_class_target = 4;
    spec.classes = {{"cat", 4, {}}, {"CAT", 4, {}}};
    auto v = validate_spec(spec);
    REQUIRE(v.size() == 1);
    CHECK(v[0].field == "classes");
    CHECK(v[0].rule == "uniqueness");

    DatasetSpec expand;
    expand.task_kind = TaskKind::Expand;
    expand.classes = {{"cat", 1, {}}};
    expand.per_class_target = 1;
    bool missing_root = false;
    for (const auto& x : validate_spec(expand))
        if (x.field == "source" && x.rule == "missing-root") missing_root = true;
    CHECK(missing_root);

    DatasetSpec seg;
    seg.task_type = TaskType::SemanticSeg;
    seg.classes = {{"road", 1, {}}};
    seg.per_class_target = 1;
    seg.annotation_formats = {AnnotationFormat::COCO};
    bool needs_mask = false;
    for (const auto& x : validate_spec(seg))
        if (x.rule == "segmentation requires mask_png") needs_mask = true;
    CHECK(needs_mask);
}

TEST_CASE("class matching is case-folded and synonym-aware") {
    DatasetSpec spec;
    spec.classes = {{"car", 1, {"automobile"}}, {"bike", 1, {}}};
    CHECK(spec.match_class("Car") == &spec.classes[0]);
    CHECK(spec.match_class("AUTOMOBILE") == &spec.classes[0]);
    CHECK(spec.match_class("tractor") == nullptr);
}

TEST_CASE("spec json round-trips") {
    DatasetSpec spec;
    spec.task_kind = TaskKind::Expand;
    spec.task_type = TaskType::Detection;
    spec.name = "x";
    spec.classes = {{"cat", 5, {"kitty"}}, {"dog", 5, {}}};
    spec.target_resolution = {{64, 48}};
    spec.annotation_formats = {AnnotationFormat::YOLO, AnnotationFormat::COCO};
    spec.per_class_target = 5;
    spec.existing_root = "/data/old";
    spec.quality.min_confidence = 0.6;
    const DatasetSpec back = spec_from_json(spec_to_json(spec));
    CHECK(back.task_kind == spec.task_kind);
    CHECK(back.task_type == spec.task_type);
    CHECK(back.classes.size() == 2);
    CHECK(back.classes[0].synonyms == spec.classes[0].synonyms);
    CHECK(back.target_resolution == spec.target_resolution);
    CHECK(back.annotation_formats == spec.annotation_formats);
    CHECK(back.existing_root == spec.existing_root);
    CHECK(back.quality.min_confidence == doctest::Approx(0.6));
}

// --- expand resolution ---------------------------------------------------------

TEST_CASE("class-dir tree resolves with inherited resolution and counts") {
    fixtures::TempDir tmp;
    fixtures::make_classdir_dataset(tmp.path() / "ds", {"cat", "dog"}, 4, 32);

    DatasetSpec spec;
    spec.task_kind = TaskKind::Expand;
    spec.per_class_target = 10;

    const auto [resolved, meta] = resolve_expand_target(spec, tmp.path() / "ds");
    CHECK(meta.layout == AnnotationFormat::ClassDirs);
    CHECK(meta.class_names == std::vector<std::string>{"cat", "dog"});
    CHECK(meta.per_class_counts.at("cat") == 4);
    REQUIRE(resolved.target_resolution.has_value());
    CHECK(resolved.target_resolution->first == 32);
    CHECK(resolved.target_resolution->second == 32);
    CHECK(resolved.task_type == TaskType::Classification);
    CHECK(resolved.classes.size() == 2);

    // resolving the resolved spec again changes nothing
    const auto [again, meta2] = resolve_expand_target(resolved, tmp.path() / "ds");
    CHECK(meta2.conflicts.empty());
    CHECK(spec_to_json(again) == spec_to_json(resolved));
}

TEST_CASE("empty directory raises EmptyDataset") {
    fixtures::TempDir tmp;
    std::filesystem::create_directories(tmp.path() / "empty");
    DatasetSpec spec;
    spec.task_kind = TaskKind::Expand;
    CHECK_THROWS_AS(resolve_expand_target(spec, tmp.path() / "empty"), EmptyDataset);
}

TEST_CASE("voc tree resolves to the VOC layout") {
    fixtures::TempDir tmp;
    fixtures::make_voc_dataset(tmp.path() / "voc", {"person", "car"}, 2);
    DatasetSpec spec;
    spec.task_kind = TaskKind::Expand;
    spec.per_class_target = 3;
    const auto [resolved, meta] = resolve_expand_target(spec, tmp.path() / "voc");
    CHECK(meta.layout == AnnotationFormat::VOC);
    CHECK(resolved.annotation_formats == std::set<AnnotationFormat>{AnnotationFormat::VOC});
    CHECK(resolved.task_type == TaskType::Detection);
    CHECK(meta.per_class_counts.at("person") == 1);
}

TEST_CASE("unknown trees raise UnrecognizedLayout") {
    fixtures::TempDir tmp;
    fixtures::write_text(tmp.path() / "ds" / "readme.txt", "hello");
    DatasetSpec spec;
    spec.task_kind = TaskKind::Expand;
    CHECK_THROWS_AS(resolve_expand_target(spec, tmp.path() / "ds"), UnrecognizedLayout);
}

TEST_CASE("demand/tree class mismatches surface as conflicts") {
    fixtures::TempDir tmp;
    fixtures::make_classdir_dataset(tmp.path() / "ds", {"cat", "dog"}, 2, 32);
    DatasetSpec spec;
    spec.task_kind = TaskKind::Expand;
    spec.per_class_target = 5;
    spec.classes = {{"cat", 5, {}}, {"dog", 5, {}}, {"bird", 5, {}}};
    const auto [resolved, meta] = resolve_expand_target(spec, tmp.path() / "ds");
    REQUIRE(meta.conflicts.size() == 1);
    CHECK(meta.conflicts[0].field == "classes");
    // resolution still inherits the tree, never guesses
    CHECK(resolved.classes.size() == 2);
}

TEST_SUITE_END();
