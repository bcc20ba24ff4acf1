#include "doctest.h"

#include <fstream>
#include <sstream>

#include "dsa/errors.hpp"
#include "dsa/pipeline.hpp"
#include "dsa/sha256.hpp"
#include "dsa/supervision.hpp"

#include "../support/fixtures.hpp"

using namespace dsa;

namespace {

RunConfig base_config(const std::filesystem::path& workspace,
                      const std::filesystem::path& corpus) {
    RunConfig cfg;
    cfg.workspace = workspace;
    cfg.seed = 7;
    cfg.workers = 2;
    cfg.batch_size = 4;
    cfg.checkpoint_every_items = 8;
    cfg.mock_backends = true;
    cfg.source.kind = acquisition::SourceDescriptor::Kind::LocalDir;
    cfg.source.locator = corpus.string();
    cfg.source.source_id = "fixture-corpus";
    cfg.prompts_dir = "";  // builtin prompts
    return cfg;
}

int count_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    int n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

}  // namespace

TEST_SUITE_BEGIN("pipeline");

TEST_CASE("classification build: full run, spec resolution conformance, determinism") {
    fixtures::TempDir tmp;
    fixtures::CorpusOptions opt;
    opt.good_per_class = 4;
    opt.bad_per_class = 1;
    opt.image_size = 48;
    fixtures::make_classification_corpus(tmp.path() / "corpus", {"alpha", "beta", "gamma"}, opt);

    const std::string demand =
        "build a classification dataset named toyset; classes: alpha, beta, gamma; "
        "3 images per class; resolution 32x32";

    auto run_once = [&](const std::filesystem::path& ws) {
        auto gw = gateway::make_mock_gateway();
        const RunConfig cfg = base_config(ws, tmp.path() / "corpus");
        std::ostringstream out;
        const int code = pipeline::cmd_build(cfg, demand, gw, nullptr, out);
        return std::make_pair(code, out.str());
    };

    const auto [code, output] = run_once(tmp.path() / "ws1");
    CHECK(code == 0);
    CHECK(output.find("DatasetAgent: successfully built toyset with 9 high-quality images.") !=
          std::string::npos);

    // class-directory layout with exactly the per-class target
    for (const char* cls : {"alpha", "beta", "gamma"}) {
        int n = 0;
        for (const auto& e :
             std::filesystem::directory_iterator(tmp.path() / "ws1" / "out" / cls)) {
            const Image img = load_image(e.path());
            CHECK(img.width == 32);   // every emitted image at spec resolution
            CHECK(img.height == 32);
            ++n;
        }
        CHECK(n == 3);
    }

    // report + manifest emitted; a balanced build reports CBI = 0
    CHECK(std::filesystem::exists(tmp.path() / "ws1" / "out" / "report.json"));
    CHECK(count_lines(tmp.path() / "ws1" / "out" / "manifest.tsv") > 9);
    {
        std::ifstream in(tmp.path() / "ws1" / "out" / "report.json");
        const auto rep = nlohmann::json::parse(in);
        for (const auto& m : rep["metrics"])
            if (m["name"] == "CBI") CHECK(m["value"].get<double>() == doctest::Approx(0.0));
    }

    // byte-identical rerun under the same seed and corpus
    const auto [code2, output2] = run_once(tmp.path() / "ws2");
    CHECK(code2 == 0);
    CHECK(pipeline::manifest_hash(tmp.path() / "ws1") == pipeline::manifest_hash(tmp.path() / "ws2"));
}

TEST_CASE("building into a workspace that already holds a run is refused") {
    fixtures::TempDir tmp;
    fixtures::CorpusOptions opt;
    opt.good_per_class = 1;
    fixtures::make_classification_corpus(tmp.path() / "corpus", {"a"}, opt);
    auto gw = gateway::make_mock_gateway();
    const RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    const std::string demand =
        "build a classification dataset named once; classes: a; 1 images per class";
    std::ostringstream out;
    REQUIRE(pipeline::cmd_build(cfg, demand, gw, nullptr, out) == 0);
    std::ostringstream again;
    CHECK_THROWS_AS(pipeline::cmd_build(cfg, demand, gw, nullptr, again), PipelineError);
}

TEST_CASE("missing class list in batch mode exits 2") {
    fixtures::TempDir tmp;
    fixtures::make_classification_corpus(tmp.path() / "corpus", {"a"}, {});
    auto gw = gateway::make_mock_gateway();
    const RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream out;
    const int code =
        pipeline::cmd_build(cfg, "build a classification dataset of 5 images each", gw, nullptr, out);
    CHECK(code == 2);
    CHECK(out.str().find("classes") != std::string::npos);
}

TEST_CASE("interactive clarification completes the demand") {
    fixtures::TempDir tmp;
    fixtures::CorpusOptions opt;
    opt.good_per_class = 2;
    fixtures::make_classification_corpus(tmp.path() / "corpus", {"red", "blue"}, opt);
    auto gw = gateway::make_mock_gateway();
    RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    cfg.batch_mode = false;
    std::istringstream answers("red, blue\n");
    std::ostringstream out;
    const int code = pipeline::cmd_build(cfg, "build a classification dataset of 2 images each",
                                         gw, &answers, out);
    CHECK(code == 0);
    CHECK(out.str().find("high-quality images") != std::string::npos);
}

TEST_CASE("unreachable backends abort with exit 3") {
    fixtures::TempDir tmp;
    fixtures::make_classification_corpus(tmp.path() / "corpus", {"a"}, {});
    auto gw = gateway::make_http_gateway(
        {{"text", "http://127.0.0.1:1/x"}, {"mm", ""}, {"ground", ""}, {"seg", ""}});
    gw.text.config.max_retries = 1;
    gw.text.config.backoff_ms = 0;
    const RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream out;
    const int code = pipeline::cmd_build(cfg, "build a dataset; classes: a", gw, nullptr, out);
    CHECK(code == 3);
}

TEST_CASE("irrelevant demands abort") {
    fixtures::TempDir tmp;
    auto gw = gateway::make_mock_gateway();
    const RunConfig cfg = base_config(tmp.path() / "ws", tmp.path());
    std::ostringstream out;
    CHECK(pipeline::cmd_build(cfg, "please write me a sonnet about the moon", gw, nullptr, out) ==
          3);
}

TEST_CASE("expand inherits the tree and reports the bookkeeping identity") {
    fixtures::TempDir tmp;
    // existing 2-class 32x32 dataset
    fixtures::make_classdir_dataset(tmp.path() / "existing", {"cat", "dog"}, 6, 32);
    // corpus with sidecars for both classes
    fixtures::CorpusOptions opt;
    opt.good_per_class = 5;
    opt.image_size = 48;
    fixtures::make_classification_corpus(tmp.path() / "corpus", {"cat", "dog"}, opt);

    auto gw = gateway::make_mock_gateway();
    const RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream out;
    const int code = pipeline::cmd_expand(cfg, "expand this dataset, add 4 images each label",
                                          tmp.path() / "existing", gw, nullptr, out);
    CHECK(code == 0);
    const std::string text = out.str();
    CHECK(text.find("successfully expanded") != std::string::npos);
    CHECK(text.find("with 8 high-quality images") != std::string::npos);
    CHECK(text.find("original=12 added=8 new_total=20") != std::string::npos);

    // every emitted image conforms to the inherited 32x32 resolution
    for (const char* cls : {"cat", "dog"}) {
        for (const auto& e :
             std::filesystem::directory_iterator(tmp.path() / "ws" / "out" / cls)) {
            const Image img = load_image(e.path());
            CHECK(img.width == 32);
            CHECK(img.height == 32);
        }
    }

    // class proportions unchanged (6+4 each), so the expand DDC is 0
    {
        std::ifstream in(tmp.path() / "ws" / "out" / "report.json");
        const auto rep = nlohmann::json::parse(in);
        for (const auto& m : rep["metrics"])
            if (m["name"] == "DDC") {
                REQUIRE(m.contains("value"));
                CHECK(m["value"].get<double>() == doctest::Approx(0.0).epsilon(1e-9));
            }
    }
}

TEST_CASE("expand over an empty corpus completes with zero added") {
    fixtures::TempDir tmp;
    fixtures::make_classdir_dataset(tmp.path() / "existing", {"cat"}, 3, 32);
    std::filesystem::create_directories(tmp.path() / "corpus");
    auto gw = gateway::make_mock_gateway();
    const RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream out;
    const int code = pipeline::cmd_expand(cfg, "expand this dataset, add 4 images each label",
                                          tmp.path() / "existing", gw, nullptr, out);
    CHECK(code == 0);
    CHECK(out.str().find("with 0 high-quality images") != std::string::npos);
}

TEST_CASE("a corrupted root fails expand with exit 3") {
    fixtures::TempDir tmp;
    fixtures::write_text(tmp.path() / "existing" / "junk.txt", "not a dataset");
    auto gw = gateway::make_mock_gateway();
    const RunConfig cfg = base_config(tmp.path() / "ws", tmp.path());
    std::ostringstream out;
    CHECK(pipeline::cmd_expand(cfg, "expand this dataset, add 2 images each label",
                               tmp.path() / "existing", gw, nullptr, out) == 3);
}

TEST_CASE("expand class conflicts surface as violations") {
    fixtures::TempDir tmp;
    fixtures::make_classdir_dataset(tmp.path() / "existing", {"cat", "dog"}, 2, 32);
    fixtures::make_classification_corpus(tmp.path() / "corpus", {"cat", "dog"}, {});
    auto gw = gateway::make_mock_gateway();
    const RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream out;
    const int code = pipeline::cmd_expand(
        cfg, "expand this dataset; classes: cat, dog, bird; 2 images each label",
        tmp.path() / "existing", gw, nullptr, out);
    CHECK(code == 3);
    CHECK(out.str().find("violation: classes") != std::string::npos);
}

TEST_CASE("resume without a checkpoint exits 3; resume of a finished run is a no-op") {
    fixtures::TempDir tmp;
    auto gw = gateway::make_mock_gateway();
    RunConfig cfg = base_config(tmp.path() / "nows", tmp.path());
    std::ostringstream out;
    CHECK(pipeline::cmd_resume(cfg, "", gw, out) == 3);
    CHECK(out.str().find("no checkpoint") != std::string::npos);

    fixtures::CorpusOptions opt;
    opt.good_per_class = 2;
    fixtures::make_classification_corpus(tmp.path() / "corpus", {"a", "b"}, opt);
    cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream run_out;
    REQUIRE(pipeline::cmd_build(cfg,
                                "build a classification dataset named t; classes: a, b; 2 images "
                                "per class",
                                gw, nullptr, run_out) == 0);
    const std::string hash_before = pipeline::manifest_hash(cfg.workspace);

    std::ostringstream resume_out;
    CHECK(pipeline::cmd_resume(cfg, "", gw, resume_out) == 0);
    CHECK(resume_out.str().find("high-quality images") != std::string::npos);
    CHECK(pipeline::manifest_hash(cfg.workspace) == hash_before);
}

TEST_CASE("tampering with a committed artifact makes resume fail as corrupt") {
    fixtures::TempDir tmp;
    fixtures::CorpusOptions opt;
    opt.good_per_class = 2;
    fixtures::make_classification_corpus(tmp.path() / "corpus", {"a", "b"}, opt);
    auto gw = gateway::make_mock_gateway();
    const RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream out;
    REQUIRE(pipeline::cmd_build(
                cfg, "build a classification dataset named t; classes: a, b; 2 images per class",
                gw, nullptr, out) == 0);

    // flip one byte in a committed staging artifact
    const auto dir = tmp.path() / "ws" / "staging" / "collected";
    std::filesystem::path victim;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".png") victim = e.path();
    REQUIRE(!victim.empty());
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(37);
    char b;
    f.seekg(37);
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0x5a);
    f.seekp(37);
    f.write(&b, 1);
    f.close();

    std::ostringstream resume_out;
    CHECK(pipeline::cmd_resume(cfg, "", gw, resume_out) == 3);
    CHECK(resume_out.str().find("corrupt") != std::string::npos);
}

TEST_CASE("detection build emits yolo/voc/coco with the confidence gate enforced") {
    fixtures::TempDir tmp;
    fixtures::make_detection_corpus(tmp.path() / "corpus", {"cat", "dog"}, 3);
    auto gw = gateway::make_mock_gateway();
    RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream out;
    const int code = pipeline::cmd_build(
        cfg, "build a detection dataset named pets; classes: cat, dog; 3 images per class", gw,
        nullptr, out);
    REQUIRE(code == 0);

    const auto ws = tmp.path() / "ws";
    CHECK(std::filesystem::exists(ws / "out" / "annotations_coco.json"));
    int yolo_files = 0;
    bool saw_half = false;
    for (const auto& e : std::filesystem::directory_iterator(ws / "out" / "labels_yolo")) {
        ++yolo_files;
        CHECK(count_lines(e.path()) == 2);  // both sidecar detections survive
        (void)saw_half;
    }
    CHECK(yolo_files == 6);
    int voc_files = 0;
    for (const auto& e : std::filesystem::directory_iterator(ws / "out" / "annotations_voc")) {
        (void)e;
        ++voc_files;
    }
    CHECK(voc_files == 6);

    // metrics command on the finished workspace prints the detection column set
    std::ostringstream mout;
    REQUIRE(pipeline::cmd_metrics(cfg, ws, mout) == 0);
    const std::string table = mout.str();
    for (const char* col : {"CBI", "SSIM", "ALR", "DSE", "SDI", "DDC", "IDDE", "BQI", "OSR"})
        CHECK(table.find(col) != std::string::npos);
    CHECK(table.find("ESI") == std::string::npos);
}

TEST_CASE("semantic segmentation build emits masks and the segmentation metric set") {
    fixtures::TempDir tmp;
    fixtures::make_detection_corpus(tmp.path() / "corpus", {"cat", "dog"}, 2, 64,
                                    /*with_masks=*/true);
    auto gw = gateway::make_mock_gateway();
    RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream out;
    const int code = pipeline::cmd_build(
        cfg,
        "build a semantic segmentation dataset named segs; classes: cat, dog; 2 images per class",
        gw, nullptr, out);
    REQUIRE(code == 0);

    const auto ws = tmp.path() / "ws";
    int masks = 0;
    for (const auto& e : std::filesystem::directory_iterator(ws / "out" / "masks_semantic")) {
        const Mask m = load_png_indices(e.path());
        std::set<std::uint32_t> vals(m.labels.begin(), m.labels.end());
        CHECK(vals.size() >= 2);
        ++masks;
    }
    CHECK(masks == 4);

    std::ostringstream mout;
    REQUIRE(pipeline::cmd_metrics(cfg, ws, mout) == 0);
    for (const char* col : {"CBI", "SSIM", "ALR", "DSE", "SDI", "DDC", "ESI", "ACS", "PCB"})
        CHECK(mout.str().find(col) != std::string::npos);
    CHECK(mout.str().find("IDDE") == std::string::npos);
}

TEST_CASE("instance segmentation emits per-instance masks and COCO RLE entries") {
    fixtures::TempDir tmp;
    fixtures::make_detection_corpus(tmp.path() / "corpus", {"cat"}, 2, 64, /*with_masks=*/true);
    auto gw = gateway::make_mock_gateway();
    RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream out;
    REQUIRE(pipeline::cmd_build(
                cfg, "build an instance segmentation dataset named inst; classes: cat; 2 images "
                     "per class",
                gw, nullptr, out) == 0);
    const auto ws = tmp.path() / "ws";
    int instance_masks = 0;
    for (const auto& e : std::filesystem::directory_iterator(ws / "out" / "masks_instance")) {
        const Image bin = load_image(e.path());
        CHECK(bin.channels == 1);
        ++instance_masks;
    }
    CHECK(instance_masks == 4);  // two instances per image
    std::ifstream in(ws / "out" / "annotations_coco.json");
    const auto coco = nlohmann::json::parse(in);
    int with_seg = 0;
    for (const auto& a : coco["annotations"])
        if (a.contains("segmentation")) ++with_seg;
    CHECK(with_seg == 4);
}

TEST_CASE("inspection inputs flow into ALR and BQI report values") {
    fixtures::TempDir tmp;
    fixtures::make_detection_corpus(tmp.path() / "corpus", {"cat"}, 3);
    auto gw = gateway::make_mock_gateway();
    RunConfig cfg = base_config(tmp.path() / "ws", tmp.path() / "corpus");
    std::ostringstream out;
    REQUIRE(pipeline::cmd_build(
                cfg, "build a detection dataset named insp; classes: cat; 3 images per class", gw,
                nullptr, out) == 0);

    // verdicts for every sampled manifest entry; the known BQI triple
    std::string verdicts;
    {
        std::ifstream mf(tmp.path() / "ws" / "out" / "alr_manifest.tsv");
        std::string line;
        while (std::getline(mf, line)) {
            const auto tab = line.find('\t');
            if (tab != std::string::npos) verdicts += line.substr(0, tab) + "\tcorrect\n";
        }
    }
    fixtures::write_text(tmp.path() / "verdicts.tsv", verdicts);
    fixtures::write_text(tmp.path() / "ious.json", "[0.8, 0.6, 0.3]");
    cfg.alr_verdicts_file = tmp.path() / "verdicts.tsv";
    cfg.bqi_ious_file = tmp.path() / "ious.json";

    std::ostringstream mout;
    REQUIRE(pipeline::cmd_metrics(cfg, tmp.path() / "ws", mout) == 0);
    std::ifstream in(tmp.path() / "ws" / "out" / "report.json");
    const auto rep = nlohmann::json::parse(in);
    bool saw_alr = false, saw_bqi = false;
    for (const auto& m : rep["metrics"]) {
        if (m["name"] == "ALR") {
            CHECK(m["value"].get<double>() == doctest::Approx(1.0));
            CHECK(m["pass"] == true);
            saw_alr = true;
        }
        if (m["name"] == "BQI") {
            CHECK(m["value"].get<double>() == doctest::Approx(0.5));
            CHECK(m["pass"] == false);  // 0.5 is below the 0.9 bar
            saw_bqi = true;
        }
    }
    CHECK(saw_alr);
    CHECK(saw_bqi);
}

TEST_CASE("metrics on a bare class-dir dataset prints the classification set") {
    fixtures::TempDir tmp;
    fixtures::make_classdir_dataset(tmp.path() / "bare", {"x", "y"}, 3, 32);
    RunConfig cfg;
    cfg.workspace = tmp.path() / "unused";
    std::ostringstream out;
    REQUIRE(pipeline::cmd_metrics(cfg, tmp.path() / "bare", out) == 0);
    for (const char* col : {"CBI", "SSIM", "ALR", "DSE", "SDI", "DDC"})
        CHECK(out.str().find(col) != std::string::npos);
    CHECK(out.str().find("IDDE") == std::string::npos);
    CHECK(std::filesystem::exists(tmp.path() / "bare" / "report.json"));
}

TEST_SUITE_END();
