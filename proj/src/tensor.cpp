#include "mcml/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace mcml {

std::size_t threshold_count(double density, std::size_t element_count) {
    MCML_CHECK(density > 0.0 && density <= 1.0, "density must be in (0, 1]");
    double k = density * static_cast<double>(element_count);
    return static_cast<std::size_t>(std::llround(k));
}

std::vector<std::uint32_t> hard_threshold_inplace(std::vector<float>& data, double density) {
    std::size_t n = data.size();
    std::size_t k = threshold_count(density, n);
    std::vector<std::uint32_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
    // Largest magnitude first; ties go to the lower flat index.
    std::nth_element(order.begin(), order.begin() + std::min(k, n), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) {
                         float ma = std::fabs(data[a]);
                         float mb = std::fabs(data[b]);
                         if (ma != mb) return ma > mb;
                         return a < b;
                     });
    std::vector<std::uint32_t> kept(order.begin(), order.begin() + std::min(k, n));
    std::sort(kept.begin(), kept.end());
    std::vector<bool> keep(n, false);
    for (std::uint32_t i : kept) keep[i] = true;
    for (std::size_t i = 0; i < n; ++i)
        if (!keep[i]) data[i] = 0.0f;
    return kept;
}

SparseMatrix hard_threshold(const DenseMatrix& m, double density) {
    std::vector<float> copy = m.data;
    std::vector<std::uint32_t> kept = hard_threshold_inplace(copy, density);
    SparseMatrix out;
    out.rows = m.rows;
    out.cols = m.cols;
    out.entries.reserve(kept.size());
    for (std::uint32_t i : kept) out.entries.push_back({i, copy[i]});
    return out;
}

DenseMatrix densify(const SparseMatrix& m) {
    DenseMatrix out(m.rows, m.cols);
    for (const SparseEntry& e : m.entries) {
        MCML_CHECK(e.index < out.size(), "sparse index out of range");
        out.data[e.index] = e.value;
    }
    return out;
}

} // namespace mcml
