#include "doctest.h"

#include <set>

#include "dsa/config.hpp"
#include "dsa/errors.hpp"
#include "dsa/geometry.hpp"
#include "dsa/image_io.hpp"
#include "dsa/parallel.hpp"
#include "dsa/rle.hpp"
#include "dsa/rng.hpp"
#include "dsa/sha256.hpp"

#include "../support/fixtures.hpp"

using namespace dsa;

TEST_SUITE_BEGIN("core");

TEST_CASE("sha256 matches the known test vector") {
    CHECK(sha256_hex(std::string("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex(std::string("")) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("splitmix rng is stable across calls and instances") {
    rng::SplitMix64 a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    CHECK(rng::derive(1, "noise", 5) == rng::derive(1, "noise", 5));
    CHECK(rng::derive(1, "noise", 5) != rng::derive(1, "noise", 6));
    CHECK(rng::derive(1, "alr") != rng::derive(2, "alr"));
}

TEST_CASE("sample_without_replacement is seeded and duplicate-free") {
    const auto s1 = rng::sample_without_replacement(100, 20, 7);
    const auto s2 = rng::sample_without_replacement(100, 20, 7);
    CHECK(s1 == s2);
    std::set<std::size_t> uniq(s1.begin(), s1.end());
    CHECK(uniq.size() == 20);
    const auto s3 = rng::sample_without_replacement(100, 20, 8);
    CHECK(s1 != s3);
}

TEST_CASE("chunked_sum equals serial sum") {
    std::vector<double> v(100000);
    rng::SplitMix64 g(3);
    double plain = 0.0;
    for (auto& x : v) {
        x = g.uniform01() - 0.5;
        plain += x;
    }
    CHECK(chunked_sum(v) == doctest::Approx(plain).epsilon(1e-12));
}

TEST_CASE("png round trip is lossless for gray and rgb") {
    for (int channels : {1, 3}) {
        const Image img = fixtures::textured_image(21, 13, 99, channels);
        const auto bytes = encode_png(img);
        const Image back = decode_image(bytes);
        CHECK(back.width == img.width);
        CHECK(back.height == img.height);
        CHECK(back.channels == img.channels);
        CHECK(back.data == img.data);
    }
}

TEST_CASE("indexed png keeps raw label values") {
    Mask m = Mask::make(9, 7, 0);
    m.at(3, 2) = 1;
    m.at(4, 2) = 2;
    m.at(5, 6) = 3;
    const auto palette = std::vector<std::array<std::uint8_t, 3>>{
        {0, 0, 0}, {255, 0, 0}, {0, 255, 0}, {0, 0, 255}};
    const auto bytes = encode_png_indexed(m, palette);
    const Mask back = decode_png_indices(bytes);
    CHECK(back.labels == m.labels);
}

TEST_CASE("corrupt inputs raise DecodeFailure, not a crash") {
    CHECK_THROWS_AS(decode_image({'n', 'o', 'p', 'e'}), DecodeFailure);
    std::vector<std::uint8_t> torn = encode_png(fixtures::textured_image(16, 16, 1));
    torn.resize(torn.size() / 2);
    CHECK_THROWS_AS(decode_image(torn), DecodeFailure);
    // jpeg magic with garbage body
    std::vector<std::uint8_t> fake_jpeg = {0xff, 0xd8, 0xff, 0x00, 0x01, 0x02};
    CHECK_THROWS_AS(decode_image(fake_jpeg), DecodeFailure);
}

TEST_CASE("bmp decode handles 24-bit bottom-up data") {
    // 2x2 bmp, bottom-up: rows are (blue, green) then (red, white)
    const std::uint8_t header[54] = {
        'B', 'M', 70, 0, 0, 0, 0, 0, 0, 0, 54, 0, 0, 0, 40, 0, 0, 0,
        2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 24, 0, 0, 0, 0, 0, 16, 0, 0, 0,
        0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    std::vector<std::uint8_t> bytes(header, header + 54);
    // bottom row first: red(BGR 0,0,255), white; padding to 8 bytes
    const std::uint8_t rows[] = {0, 0, 255, 255, 255, 255, 0, 0,
                                 255, 0, 0, 0, 255, 0, 0, 0};
    bytes.insert(bytes.end(), rows, rows + 16);
    const Image img = decode_image(bytes);
    REQUIRE(img.width == 2);
    REQUIRE(img.height == 2);
    CHECK(img.at(0, 0, 2) == 255);  // top-left is blue
    CHECK(img.at(1, 0, 1) == 255);  // top-right green
    CHECK(img.at(0, 1, 0) == 255);  // bottom-left red
    CHECK(img.at(1, 1, 0) == 255);  // bottom-right white
}

TEST_CASE("iou of identical, disjoint, and half-overlapping boxes") {
    const NormalizedBox a{0.0, 0.0, 0.5, 0.5};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, {0.5, 0.5, 1.0, 1.0}) == doctest::Approx(0.0));
    // [0,0,.5,.5] vs [.25,0,.75,.5]: inter .25*.5, union .25+.25-.125
    CHECK(iou(a, {0.25, 0.0, 0.75, 0.5}) == doctest::Approx(0.125 / 0.375));
}

TEST_CASE("rle codec round-trips random masks") {
    rng::SplitMix64 g(11);
    for (int trial = 0; trial < 25; ++trial) {
        const int w = 1 + static_cast<int>(g.below(24));
        const int h = 1 + static_cast<int>(g.below(24));
        Mask m = Mask::make(w, h, 0);
        for (auto& v : m.labels) v = g.below(3) == 0 ? 1 : 0;
        const Mask back = rle_decode(rle_encode(m));
        REQUIRE(back.width == w);
        REQUIRE(back.height == h);
        CHECK(back.labels == m.labels);
    }
}

TEST_CASE("config files parse sections, comments, and quoted values") {
    fixtures::TempDir tmp;
    fixtures::write_text(tmp.path() / "run.cfg",
                         "# header comment\n"
                         "[run]\n"
                         "workers = 3\n"
                         "seed = 42\n"
                         "source_kind = manifest   # trailing comment\n"
                         "source_locator = \"/data/with space/corpus.tsv\"\n"
                         "keep_negatives = true\n");
    const RunConfig cfg = load_config_file(tmp.path() / "run.cfg");
    CHECK(cfg.workers == 3);
    CHECK(cfg.seed == 42);
    CHECK(cfg.source.kind == acquisition::SourceDescriptor::Kind::CorpusManifest);
    CHECK(cfg.source.locator == "/data/with space/corpus.tsv");
    CHECK(cfg.keep_negatives);

    fixtures::write_text(tmp.path() / "bad.cfg", "no_such_key = 1\n");
    CHECK_THROWS_AS(load_config_file(tmp.path() / "bad.cfg"), PipelineError);
    fixtures::write_text(tmp.path() / "bad2.cfg", "just a line without equals\n");
    CHECK_THROWS_AS(load_config_file(tmp.path() / "bad2.cfg"), PipelineError);
}

TEST_CASE("the shipped example config parses") {
    const std::filesystem::path example =
        std::filesystem::path(__FILE__).parent_path().parent_path().parent_path() / "configs" /
        "example.conf";
    REQUIRE(std::filesystem::exists(example));
    const RunConfig cfg = load_config_file(example);
    CHECK(cfg.workers == 4);
    CHECK(cfg.source.kind == acquisition::SourceDescriptor::Kind::LocalDir);
}

TEST_CASE("rle counts are column-major starting with background") {
    // 2x2 mask: foreground only at (x=0,y=1)
    Mask m = Mask::make(2, 2, 0);
    m.at(0, 1) = 1;
    const auto rle = rle_encode(m);
    CHECK(rle["size"] == nlohmann::json({2, 2}));
    CHECK(rle["counts"] == nlohmann::json({1, 1, 2}));
}

TEST_SUITE_END();
