#include <benchmark/benchmark.h>

#include "dsa/metrics.hpp"
#include "dsa/rng.hpp"
#include "dsa/toolpkg.hpp"

// Compares the OpenMP kernels with the plain serial reference paths.
// Run: ./bench_kernels [--benchmark_filter=...]
namespace {

using namespace dsa;

Image make_test_image(int w, int h, int channels, std::uint64_t seed) {
    Image img = Image::make(w, h, channels);
    rng::SplitMix64 g(seed);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(g.below(256));
    return img;
}

const Image& big_rgb() {
    static const Image img = make_test_image(512, 512, 3, 42);
    return img;
}
const Image& big_gray() {
    static const Image img = make_test_image(512, 512, 1, 43);
    return img;
}

void bm_resize_bilinear_omp(benchmark::State& state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(
            toolpkg::resize(big_rgb(), 224, 224, toolpkg::Interpolation::Bilinear));
}
void bm_resize_bilinear_serial(benchmark::State& state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(
            toolpkg::serial::resize(big_rgb(), 224, 224, toolpkg::Interpolation::Bilinear));
}
void bm_resize_bicubic_omp(benchmark::State& state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(
            toolpkg::resize(big_rgb(), 224, 224, toolpkg::Interpolation::Bicubic));
}
void bm_resize_bicubic_serial(benchmark::State& state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(
            toolpkg::serial::resize(big_rgb(), 224, 224, toolpkg::Interpolation::Bicubic));
}

void bm_rgb_to_lab_omp(benchmark::State& state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(toolpkg::convert_color_space(
            big_rgb(), toolpkg::ColorSpace::RGB, toolpkg::ColorSpace::LAB));
}
void bm_rgb_to_lab_serial(benchmark::State& state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(toolpkg::serial::convert_color_space(
            big_rgb(), toolpkg::ColorSpace::RGB, toolpkg::ColorSpace::LAB));
}

void bm_noise_omp(benchmark::State& state) {
    toolpkg::AugmentSpec spec;
    spec.kind = toolpkg::AugmentSpec::Kind::GaussianNoise;
    spec.sigma = 6.0;
    spec.seed = 7;
    for (auto _ : state) benchmark::DoNotOptimize(toolpkg::augment(big_rgb(), spec));
}
void bm_noise_serial(benchmark::State& state) {
    toolpkg::AugmentSpec spec;
    spec.kind = toolpkg::AugmentSpec::Kind::GaussianNoise;
    spec.sigma = 6.0;
    spec.seed = 7;
    for (auto _ : state) benchmark::DoNotOptimize(toolpkg::serial::augment(big_rgb(), spec));
}

void bm_standardize_omp(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(toolpkg::standardize_pixels(big_rgb()));
}
void bm_standardize_serial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(toolpkg::serial::standardize_pixels(big_rgb()));
}

void bm_ssim_omp(benchmark::State& state) {
    const Image a = big_gray();
    const Image b = make_test_image(512, 512, 1, 99);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::ssim(a, b));
}
void bm_ssim_serial(benchmark::State& state) {
    const Image a = big_gray();
    const Image b = make_test_image(512, 512, 1, 99);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::serial::ssim(a, b));
}

void bm_esi_omp(benchmark::State& state) {
    Mask m = Mask::make(512, 512, 0);
    for (int y = 0; y < 512; ++y)
        for (int x = 256; x < 512; ++x) m.at(x, y) = 1;
    const auto edges = metrics::mask_boundary_pixels(m);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::esi(big_gray(), edges));
}
void bm_esi_serial(benchmark::State& state) {
    Mask m = Mask::make(512, 512, 0);
    for (int y = 0; y < 512; ++y)
        for (int x = 256; x < 512; ++x) m.at(x, y) = 1;
    const auto edges = metrics::mask_boundary_pixels(m);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::serial::esi(big_gray(), edges));
}

BENCHMARK(bm_resize_bilinear_omp);
BENCHMARK(bm_resize_bilinear_serial);
BENCHMARK(bm_resize_bicubic_omp);
BENCHMARK(bm_resize_bicubic_serial);
BENCHMARK(bm_rgb_to_lab_omp);
BENCHMARK(bm_rgb_to_lab_serial);
BENCHMARK(bm_noise_omp);
BENCHMARK(bm_noise_serial);
BENCHMARK(bm_standardize_omp);
BENCHMARK(bm_standardize_serial);
BENCHMARK(bm_ssim_omp);
BENCHMARK(bm_ssim_serial);
BENCHMARK(bm_esi_omp);
BENCHMARK(bm_esi_serial);

}  // namespace

BENCHMARK_MAIN();
