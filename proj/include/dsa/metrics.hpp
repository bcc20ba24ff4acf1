#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsa/image.hpp"

// Dataset quality metric kernels. Conventions pinned for reproducibility:
//   - DSE is base-2 entropy; DDC (KL) and IDDE use natural log
//   - SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=255,
//     mean over valid window centers, luma input for color images
//   - IDDE area cuts: small < 32^2, medium in [32^2, 96^2], large > 96^2
//   - ESI: Sobel 3x3 (edge-clamped) over mask-boundary pixels
namespace dsa::metrics {

struct ClassCounts {
    std::vector<std::uint64_t> counts;  // n_i per class, K = counts.size()
};

struct SourceCounts {
    std::vector<std::uint64_t> counts;
};

struct FeatureVectorSet {
    std::vector<std::vector<double>> vectors;
};

struct DistributionPair {
    std::vector<double> p;
    std::vector<double> q;
};

double cbi(const ClassCounts& c);
double dse(const SourceCounts& s);
double sdi(const FeatureVectorSet& f);
double ddc(const DistributionPair& d);
double idde(const std::vector<std::uint64_t>& areas);
double bqi(const std::vector<double>& ious);

struct OsrResult {
    double rate = 0.0;
    std::size_t partial = 0;  // levels > 0.3
    std::size_t severe = 0;   // levels > 0.6
    std::size_t total = 0;
};
OsrResult osr(const std::vector<double>& levels);

double ssim(const Image& a, const Image& b);

using EdgeSet = std::vector<std::pair<int, int>>;
EdgeSet mask_boundary_pixels(const Mask& m);
double esi(const Image& gray, const EdgeSet& edges);

double acs_dice(const Mask& a, const Mask& b);
double pcb(const std::vector<std::uint64_t>& pixel_counts);

// ALR is a human-inspection metric: we generate the sample manifest and
// ingest verdicts, nothing more.
struct AlrEntry {
    std::string image_id;
    std::string label;
};
std::vector<AlrEntry> alr_manifest(const std::vector<AlrEntry>& dataset, std::size_t sample_n,
                                   std::uint64_t seed);
double alr_ingest(const std::vector<AlrEntry>& manifest,
                  const std::map<std::string, bool>& verdicts);

// default SDI feature extractor: 64-bin gray histogram of the 32x32 resize
inline constexpr const char* kDefaultFeatureExtractor = "gray-hist-64@32x32";
std::vector<double> default_feature_vector(const Image& img);

// single-threaded reference kernels for the bench target
namespace serial {
double ssim(const Image& a, const Image& b);
double esi(const Image& gray, const EdgeSet& edges);
}  // namespace serial

}  // namespace dsa::metrics
