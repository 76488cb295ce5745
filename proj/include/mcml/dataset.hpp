#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcml/common.hpp"
#include "mcml/rng.hpp"
#include "mcml/tensor.hpp"

namespace mcml {

struct LabeledImage {
    ImageTensor image;
    int label = 0; // class id 0-9
};

using Dataset = std::vector<LabeledImage>;

struct DatasetSplit {
    Dataset train;
    Dataset validation;
    Dataset test;
};

// Labeled feature vectors, used by the synthetic-cluster generator and the
// flattened-input model families in tests.
struct LabeledVectors {
    int dims = 0;
    std::vector<std::vector<float>> x;
    std::vector<int> y;
};

// Reads the standard CIFAR-10 binary layout: 3073-byte records, one label
// byte then 3072 pixel bytes in channel-planar R,G,B order. Pixels are
// scaled to [0,1]. With `strict` the directory must hold the five training
// batches of 10,000 records plus test_batch.bin.
std::pair<Dataset, Dataset> load_cifar10(const std::string& directory, bool strict = true);

// Writes a dataset in the same binary layout (used for fixtures).
void write_cifar10_batches(const std::string& directory, const Dataset& train,
                           const Dataset& test);

// Raw record bytes for one image (label byte + channel-planar pixels),
// reconstructed from the scaled floats. Ingestion is lossless, so this
// reproduces the source bytes exactly.
std::vector<std::uint8_t> to_cifar_record(const LabeledImage& img);

// Deterministic class-balanced holdout: per class, the first `per_class`
// indices of a seeded shuffle go to validation; train keeps original order.
DatasetSplit stratified_holdout(const Dataset& train, int per_class, std::uint64_t seed);

// Class-balanced subset in original order (desk-scale runs).
Dataset stratified_subset(const Dataset& data, int per_class, std::uint64_t seed);

// Gaussian clusters with class means at least `separation` apart.
LabeledVectors synth_blobs(int classes, int dims, int per_class, double separation,
                           std::uint64_t seed);

// Embeds feature vectors into 32x32x3 images (leading slots, rest zero).
Dataset blobs_to_images(const LabeledVectors& v);

// Synthetic CIFAR-shaped classification set: per-class low-frequency colour
// fields plus per-sample shift, brightness jitter and pixel noise, quantized
// to bytes so the files are byte-exact CIFAR records. Learnable but not
// trivially separable; stands in for CIFAR-10 when the real data is absent.
// The class fields come from `pattern_seed`, so different sample seeds give
// disjoint draws of the same ten classes.
Dataset make_synthetic_images(int per_class, std::uint64_t seed, double noise = 0.18,
                              std::uint64_t pattern_seed = 2718281828);

// Opt-in per-channel standardization; statistics come from `train` and are
// applied to all three parts.
void standardize_split(DatasetSplit& split);

std::vector<float> flatten(const ImageTensor& img);

} // namespace mcml
