#pragma once

#include <string>
#include <vector>

#include "mcml/common.hpp"

namespace mcml {

// Candidate layer set. Pools are 2x2, convolutions stride-1 valid padding,
// plain Conv2D has no activation while the depthwise variant applies ReLU
// (multiplier 1, so its channel count follows the input; the declared
// output_dim is kept only for the text format). Dropout rate is 0.1.
enum class LayerKind {
    AvgPool,     // A
    MaxPool,     // M
    DenseReLU,   // D
    DenseLinear, // D* (output 10)
    Conv,        // C1
    DepthwiseConv, // C2
    Dropout,     // Dr
};

struct LayerSpec {
    LayerKind kind;
    int output_dim = 0; // D, C1, C2; D* fixed 10
    int kernel = 0;     // C1: 1/3/5, C2: 3/5

    bool operator==(const LayerSpec&) const = default;
};

struct Shape3 {
    int h = 0, w = 0, c = 0;
    std::size_t elems() const { return static_cast<std::size_t>(h) * w * c; }
};

struct ArchSpec {
    std::vector<LayerSpec> layers;

    bool operator==(const ArchSpec&) const = default;
};

// Variable-parameter domains.
extern const std::vector<int> kDenseDims;       // {16, 32, 64}
extern const std::vector<int> kConvDims;        // {4, 6, 8, 10, 12, 16, 32, 64}
extern const std::vector<int> kConvKernels;     // {1, 3, 5}
extern const std::vector<int> kDepthwiseKernels; // {3, 5}

// The 16 serial layer patterns, as abbreviation strings ("A,C,C,C,M,Dr,D*").
const std::vector<std::string>& serial_patterns();

// Cartesian expansion of the patterns over the layer domains, each C slot
// instantiated as both C1 and C2, deduplicated.
std::vector<ArchSpec> enumerate_models();

// Text format matching the tables: A,C1(6,3),C1(32,1),M,C2(64,3),Dr,D*
// Dense layers print as D(16); parse and print round-trip exactly.
std::string print_arch(const ArchSpec& arch);
ArchSpec parse_arch(const std::string& text);

// Output shape of each layer when fed a 32x32x3 image; index 0 is the input
// shape, so the vector has layers.size()+1 entries. Dense layers report
// shape {1, 1, units}. Throws on a shape mismatch (kernel larger than the
// spatial extent, dense before the feature map is flattenable, ...).
std::vector<Shape3> shape_chain(const ArchSpec& arch);

// Trainable parameter count (weights + biases).
std::uint64_t arch_param_count(const ArchSpec& arch);

bool is_conv(LayerKind k);
bool is_dense(LayerKind k);

} // namespace mcml
