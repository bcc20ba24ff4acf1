#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dsa {

// OpenMP map over [0,n). Each iteration must write only to its own output
// slots, so results are identical regardless of thread count or schedule.
template <class F>
void parallel_for(std::int64_t n, F&& f, int num_threads = 0) {
#ifdef _OPENMP
    if (num_threads > 0) {
#pragma omp parallel for schedule(static) num_threads(num_threads)
        for (std::int64_t i = 0; i < n; ++i) f(i);
    } else {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) f(i);
    }
#else
    for (std::int64_t i = 0; i < n; ++i) f(i);
#endif
}

// Deterministic sum: fixed-size chunks accumulated independently (parallel),
// partials reduced serially in chunk order. The result does not depend on
// thread count, so hashed artifacts stay byte-identical across runs.
inline double chunked_sum(const double* v, std::size_t n) {
    constexpr std::size_t kChunk = 4096;
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    if (chunks <= 1) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    std::vector<double> partial(chunks, 0.0);
    parallel_for(static_cast<std::int64_t>(chunks), [&](std::int64_t c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
        const std::size_t hi = lo + kChunk < n ? lo + kChunk : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += v[i];
        partial[static_cast<std::size_t>(c)] = s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

inline double chunked_sum(const std::vector<double>& v) { return chunked_sum(v.data(), v.size()); }

// Deterministic (mean, population variance) over get(0..n-1), same chunking
// scheme as chunked_sum.
template <class Get>
std::pair<double, double> chunked_moments(std::size_t n, Get&& get) {
    constexpr std::size_t kChunk = 4096;
    const std::size_t chunks = (n + kChunk - 1) / kChunk;
    std::vector<double> psum(chunks, 0.0), psq(chunks, 0.0);
    parallel_for(static_cast<std::int64_t>(chunks), [&](std::int64_t c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
        const std::size_t hi = lo + kChunk < n ? lo + kChunk : n;
        double s = 0.0, q = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const double v = get(i);
            s += v;
            q += v * v;
        }
        psum[static_cast<std::size_t>(c)] = s;
        psq[static_cast<std::size_t>(c)] = q;
    });
    double sum = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
        sum += psum[c];
        sq += psq[c];
    }
    const double mean = sum / static_cast<double>(n);
    return {mean, sq / static_cast<double>(n) - mean * mean};
}

}  // namespace dsa
