#pragma once

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mcml::par {

// Thread cap for the OpenMP kernels. 0 means "whatever OpenMP gives us".
// The serial reference path is the same code run with max_threads(1); the
// chunked reduction below makes results bit-identical either way.
inline int& max_threads_ref() {
    static int v = 0;
    return v;
}
inline int max_threads() { return max_threads_ref(); }
inline void set_max_threads(int n) { max_threads_ref() = n; }

inline int hw_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Parallel loop over [0, n).
template <typename Body>
void parallel_for(std::size_t n, const Body& body) {
#ifdef _OPENMP
    int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt > 0 ? nt : omp_get_max_threads())
    for (long long i = 0; i < static_cast<long long>(n); ++i)
        body(static_cast<std::size_t>(i));
#else
    for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

// Fixed-size chunking so that floating-point accumulation order does not
// depend on the thread count: body fills one accumulator per chunk, chunks
// run in parallel, and the caller merges them in chunk order.
constexpr std::size_t kChunk = 8;

inline std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

template <typename Body>
void for_chunks(std::size_t n, const Body& body) {
    std::size_t nc = chunk_count(n);
    parallel_for(nc, [&](std::size_t c) {
        std::size_t lo = c * kChunk;
        std::size_t hi = lo + kChunk < n ? lo + kChunk : n;
        body(c, lo, hi);
    });
}

} // namespace mcml::par
