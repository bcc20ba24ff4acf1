#include "dsa/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dsa/errors.hpp"
#include "dsa/parallel.hpp"
#include "dsa/rng.hpp"
#include "dsa/toolpkg.hpp"

namespace dsa::metrics {

namespace {

double checked_total(const std::vector<std::uint64_t>& counts, const char* what) {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    if (counts.empty() || total == 0) throw PipelineError(std::string(what) + ": empty input");
    return static_cast<double>(total);
}

}  // namespace

double cbi(const ClassCounts& c) {
    const double total = checked_total(c.counts, "cbi");
    const double k = static_cast<double>(c.counts.size());
    double acc = 0.0;
    for (auto n : c.counts) {
        const double d = static_cast<double>(n) / total - 1.0 / k;
        acc += d * d;
    }
    return std::sqrt(acc / k);
}

double dse(const SourceCounts& s) {
    const double total = checked_total(s.counts, "dse");
    double h = 0.0;
    for (auto n : s.counts) {
        if (n == 0) continue;  // 0 log 0 := 0
        const double p = static_cast<double>(n) / total;
        h -= p * std::log2(p);
    }
    return h;
}

double sdi(const FeatureVectorSet& f) {
    const std::size_t n = f.vectors.size();
    if (n < 2) throw PipelineError("sdi: need at least 2 vectors");
    const std::size_t dim = f.vectors[0].size();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (f.vectors[i].size() != dim) throw PipelineError("sdi: dimension mismatch");
        double s = 0.0;
        for (double v : f.vectors[i]) s += v * v;
        if (s <= 0.0) throw DegenerateVector("sdi: zero-norm vector");
        norms[i] = std::sqrt(s);
    }
    // ordered pairs i != j; cosine is symmetric so sum unordered pairs twice
    std::vector<double> pair_sums(n, 0.0);
    parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (static_cast<std::size_t>(i) == j) continue;
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k) dot += f.vectors[i][k] * f.vectors[j][k];
            acc += dot / (norms[i] * norms[j]);
        }
        pair_sums[i] = acc;
    });
    double total = 0.0;
    for (double v : pair_sums) total += v;
    return 1.0 - total / (static_cast<double>(n) * (n - 1));
}

double ddc(const DistributionPair& d) {
    if (d.p.size() != d.q.size() || d.p.empty()) throw PipelineError("ddc: shape mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < d.p.size(); ++i) {
        if (d.p[i] <= 0.0) continue;
        if (d.q[i] <= 0.0) throw UnsupportedSupport("ddc: p>0 where q=0");
        kl += d.p[i] * std::log(d.p[i] / d.q[i]);
    }
    return kl;
}

double idde(const std::vector<std::uint64_t>& areas) {
    if (areas.empty()) throw PipelineError("idde: empty input");
    std::uint64_t buckets[3] = {0, 0, 0};
    for (auto a : areas) {
        if (a < 1024) ++buckets[0];        // < 32^2
        else if (a <= 9216) ++buckets[1];  // [32^2, 96^2]
        else ++buckets[2];                 // > 96^2
    }
    const double n = static_cast<double>(areas.size());
    double h = 0.0;
    for (auto b : buckets) {
        if (b == 0) continue;
        const double p = b / n;
        h -= p * std::log(p);
    }
    return h;
}

double bqi(const std::vector<double>& ious) {
    if (ious.empty()) throw PipelineError("bqi: empty input");
    double credit = 0.0;
    for (double v : ious) {
        if (v > 0.7) credit += 1.0;
        else if (v > 0.5) credit += 0.5;  // (0.5, 0.7] gets half credit
    }
    return credit / static_cast<double>(ious.size());
}

OsrResult osr(const std::vector<double>& levels) {
    if (levels.empty()) throw PipelineError("osr: empty input");
    OsrResult r;
    r.total = levels.size();
    std::size_t occluded = 0;
    for (double v : levels) {
        if (v > 0.0) ++occluded;
        if (v > 0.3) ++r.partial;
        if (v > 0.6) ++r.severe;
    }
    r.rate = static_cast<double>(occluded) / static_cast<double>(r.total);
    return r;
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

namespace {

constexpr int kWin = 11;
constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

const std::vector<double>& gaussian_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(kWin * kWin);
        const double sigma = 1.5;
        double sum = 0.0;
        for (int y = 0; y < kWin; ++y)
            for (int x = 0; x < kWin; ++x) {
                const double dx = x - kWin / 2, dy = y - kWin / 2;
                v[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
                sum += v[y * kWin + x];
            }
        for (double& e : v) e /= sum;
        return v;
    }();
    return w;
}

double window_ssim(const std::vector<double>& a, const std::vector<double>& b, int width, int x0,
                   int y0) {
    const auto& w = gaussian_window();
    double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
    for (int dy = 0; dy < kWin; ++dy) {
        for (int dx = 0; dx < kWin; ++dx) {
            const double wt = w[dy * kWin + dx];
            const double va = a[(y0 + dy) * static_cast<std::size_t>(width) + (x0 + dx)];
            const double vb = b[(y0 + dy) * static_cast<std::size_t>(width) + (x0 + dx)];
            mu_a += wt * va;
            mu_b += wt * vb;
            saa += wt * va * va;
            sbb += wt * vb * vb;
            sab += wt * va * vb;
        }
    }
    const double var_a = saa - mu_a * mu_a;
    const double var_b = sbb - mu_b * mu_b;
    const double cov = sab - mu_a * mu_b;
    return ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
           ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw DimensionMismatch("ssim: images differ in size");
    if (a.width < kWin || a.height < kWin) throw ImageTooSmall("ssim: needs >= 11px per side");
    const std::vector<double> ga = to_gray_luma(a);
    const std::vector<double> gb = to_gray_luma(b);
    const int nx = a.width - kWin + 1;
    const int ny = a.height - kWin + 1;
    std::vector<double> vals(static_cast<std::size_t>(nx) * ny);
    parallel_for(static_cast<std::int64_t>(ny), [&](std::int64_t y) {
        for (int x = 0; x < nx; ++x)
            vals[static_cast<std::size_t>(y) * nx + x] = window_ssim(ga, gb, a.width, x, static_cast<int>(y));
    });
    return chunked_sum(vals) / static_cast<double>(vals.size());
}

// ---------------------------------------------------------------------------
// ESI
// ---------------------------------------------------------------------------

EdgeSet mask_boundary_pixels(const Mask& m) {
    EdgeSet edges;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            const std::uint32_t v = m.at(x, y);
            const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                const int nx = x + dx[k], ny = y + dy[k];
                if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
                if (m.at(nx, ny) != v) {
                    edges.emplace_back(x, y);
                    break;
                }
            }
        }
    }
    return edges;
}

namespace {

double sobel_magnitude(const std::vector<double>& g, int w, int h, int x, int y) {
    auto px = [&](int xx, int yy) {
        xx = std::clamp(xx, 0, w - 1);
        yy = std::clamp(yy, 0, h - 1);
        return g[static_cast<std::size_t>(yy) * w + xx];
    };
    const double gx = -px(x - 1, y - 1) + px(x + 1, y - 1) - 2 * px(x - 1, y) + 2 * px(x + 1, y) -
                      px(x - 1, y + 1) + px(x + 1, y + 1);
    const double gy = -px(x - 1, y - 1) - 2 * px(x, y - 1) - px(x + 1, y - 1) + px(x - 1, y + 1) +
                      2 * px(x, y + 1) + px(x + 1, y + 1);
    return std::sqrt(gx * gx + gy * gy);
}

}  // namespace

double esi(const Image& gray, const EdgeSet& edges) {
    if (edges.empty()) throw EmptyEdgeSet("esi: empty edge set");
    const std::vector<double> g = to_gray_luma(gray);
    std::vector<double> mags(edges.size());
    parallel_for(static_cast<std::int64_t>(edges.size()), [&](std::int64_t i) {
        mags[i] = sobel_magnitude(g, gray.width, gray.height, edges[i].first, edges[i].second);
    });
    return chunked_sum(mags) / static_cast<double>(mags.size());
}

// ---------------------------------------------------------------------------
// Dice / PCB / ALR
// ---------------------------------------------------------------------------

double acs_dice(const Mask& a, const Mask& b) {
    if (!a.same_dims(b)) throw DimensionMismatch("dice: mask dims differ");
    std::size_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        const bool ia = a.labels[i] != 0, ib = b.labels[i] != 0;
        na += ia;
        nb += ib;
        inter += ia && ib;
    }
    if (na + nb == 0) throw BothEmpty("dice: both masks empty");
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double pcb(const std::vector<std::uint64_t>& pixel_counts) {
    const double total = checked_total(pixel_counts, "pcb");
    const double k = static_cast<double>(pixel_counts.size());
    double acc = 0.0;
    for (auto n : pixel_counts) {
        const double d = static_cast<double>(n) / total - 1.0 / k;
        acc += d * d;
    }
    return 1.0 - std::sqrt(acc / k);
}

std::vector<AlrEntry> alr_manifest(const std::vector<AlrEntry>& dataset, std::size_t sample_n,
                                   std::uint64_t seed) {
    if (sample_n > dataset.size()) throw SampleTooLarge("alr: sample larger than dataset");
    const auto idx = rng::sample_without_replacement(dataset.size(), sample_n, seed);
    std::vector<AlrEntry> out;
    out.reserve(sample_n);
    for (auto i : idx) out.push_back(dataset[i]);
    return out;
}

double alr_ingest(const std::vector<AlrEntry>& manifest,
                  const std::map<std::string, bool>& verdicts) {
    if (manifest.empty()) throw PipelineError("alr: empty manifest");
    for (const auto& [id, ok] : verdicts) {
        (void)ok;
        const bool known = std::any_of(manifest.begin(), manifest.end(),
                                       [&](const AlrEntry& e) { return e.image_id == id; });
        if (!known) throw IngestMismatch("alr: verdict for unknown image id: " + id);
    }
    std::size_t correct = 0;
    for (const auto& e : manifest) {
        auto it = verdicts.find(e.image_id);
        if (it == verdicts.end()) throw IngestMismatch("alr: missing verdict for " + e.image_id);
        if (it->second) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(manifest.size());
}

std::vector<double> default_feature_vector(const Image& img) {
    const Image small = toolpkg::resize(img, 32, 32, toolpkg::Interpolation::Bilinear);
    const std::vector<double> gray = to_gray_luma(small);
    std::vector<double> hist(64, 0.0);
    for (double v : gray) {
        int bin = static_cast<int>(v / 4.0);
        if (bin > 63) bin = 63;
        hist[bin] += 1.0;
    }
    return hist;
}

// ---------------------------------------------------------------------------
// serial reference kernels
// ---------------------------------------------------------------------------

namespace serial {

double ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw DimensionMismatch("ssim: images differ in size");
    if (a.width < kWin || a.height < kWin) throw ImageTooSmall("ssim: needs >= 11px per side");
    const std::vector<double> ga = to_gray_luma(a);
    const std::vector<double> gb = to_gray_luma(b);
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y + kWin <= a.height; ++y) {
        for (int x = 0; x + kWin <= a.width; ++x) {
            sum += window_ssim(ga, gb, a.width, x, y);
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

double esi(const Image& gray, const EdgeSet& edges) {
    if (edges.empty()) throw EmptyEdgeSet("esi: empty edge set");
    const std::vector<double> g = to_gray_luma(gray);
    double sum = 0.0;
    for (const auto& [x, y] : edges) sum += sobel_magnitude(g, gray.width, gray.height, x, y);
    return sum / static_cast<double>(edges.size());
}

}  // namespace serial

}  // namespace dsa::metrics
