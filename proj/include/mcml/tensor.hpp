#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mcml/common.hpp"

namespace mcml {

// H x W x C float image, height-major then width then channel.
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    ImageTensor() = default;
    ImageTensor(int h, int w, int c)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, 0.0f) {}

    float& at(int r, int c, int ch) {
        return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    float at(int r, int c, int ch) const {
        return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    std::size_t size() const { return data.size(); }
};

struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data; // row-major

    DenseMatrix() = default;
    DenseMatrix(int r, int c)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return data.size(); }
};

struct SparseEntry {
    std::uint32_t index = 0; // flat row-major index into the dense shape
    float value = 0.0f;
};

// Value + flat-index pairs over a fixed dense shape; indices strictly
// increasing. Priced at 8 bytes per nonzero by the size model.
struct SparseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<SparseEntry> entries;

    std::size_t nnz() const { return entries.size(); }
};

// Number of entries kept by a hard threshold at the given density.
std::size_t threshold_count(double density, std::size_t element_count);

// Keeps the k = round(density * rows * cols) largest-magnitude entries, ties
// broken toward the lower flat index, and zeroes the rest.
SparseMatrix hard_threshold(const DenseMatrix& m, double density);

// In-place variant used by training loops: zeroes everything outside the
// kept set and reports the kept flat indices (sorted).
std::vector<std::uint32_t> hard_threshold_inplace(std::vector<float>& data, double density);

DenseMatrix densify(const SparseMatrix& m);

} // namespace mcml
