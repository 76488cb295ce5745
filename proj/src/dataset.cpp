#include "mcml/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mcml/serialize.hpp"

namespace mcml {

namespace {

constexpr std::size_t kRecordBytes = 1 + 3 * 1024;

LabeledImage decode_record(const std::uint8_t* rec) {
    LabeledImage out;
    out.label = rec[0];
    MCML_CHECK(out.label <= 9, "CIFAR record label byte > 9");
    out.image = ImageTensor(kImageHeight, kImageWidth, kImageChannels);
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < kImageHeight; ++r)
            for (int c = 0; c < kImageWidth; ++c) {
                std::uint8_t b = rec[1 + ch * 1024 + r * kImageWidth + c];
                out.image.at(r, c, ch) = static_cast<float>(b) / 255.0f;
            }
    return out;
}

Dataset load_batch(const std::string& path, bool strict) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    MCML_CHECK(in.good(), "missing CIFAR batch file: " + path);
    std::size_t len = static_cast<std::size_t>(in.tellg());
    MCML_CHECK(len % kRecordBytes == 0,
               "CIFAR batch length not a multiple of 3073: " + path);
    std::size_t n = len / kRecordBytes;
    if (strict) MCML_CHECK(n == 10000, "CIFAR batch must hold 10,000 records: " + path);
    in.seekg(0);
    std::vector<std::uint8_t> buf(len);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(len));
    MCML_CHECK(in.good(), "read failed: " + path);
    Dataset out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(decode_record(buf.data() + i * kRecordBytes));
    return out;
}

} // namespace

std::pair<Dataset, Dataset> load_cifar10(const std::string& directory, bool strict) {
    Dataset train;
    for (int b = 1; b <= 5; ++b) {
        Dataset batch = load_batch(directory + "/data_batch_" + std::to_string(b) + ".bin", strict);
        train.insert(train.end(), batch.begin(), batch.end());
    }
    Dataset test = load_batch(directory + "/test_batch.bin", strict);
    return {std::move(train), std::move(test)};
}

std::vector<std::uint8_t> to_cifar_record(const LabeledImage& img) {
    std::vector<std::uint8_t> rec(kRecordBytes, 0);
    rec[0] = static_cast<std::uint8_t>(img.label);
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < kImageHeight; ++r)
            for (int c = 0; c < kImageWidth; ++c) {
                float v = img.image.at(r, c, ch) * 255.0f;
                rec[1 + ch * 1024 + r * kImageWidth + c] =
                    static_cast<std::uint8_t>(std::lround(v));
            }
    return rec;
}

void write_cifar10_batches(const std::string& directory, const Dataset& train,
                           const Dataset& test) {
    MCML_CHECK(train.size() % 5 == 0, "train size must split into five batches");
    std::size_t per_batch = train.size() / 5;
    for (int b = 0; b < 5; ++b) {
        std::vector<std::uint8_t> bytes;
        bytes.reserve(per_batch * kRecordBytes);
        for (std::size_t i = 0; i < per_batch; ++i) {
            auto rec = to_cifar_record(train[b * per_batch + i]);
            bytes.insert(bytes.end(), rec.begin(), rec.end());
        }
        write_file(directory + "/data_batch_" + std::to_string(b + 1) + ".bin", bytes);
    }
    std::vector<std::uint8_t> bytes;
    bytes.reserve(test.size() * kRecordBytes);
    for (const auto& img : test) {
        auto rec = to_cifar_record(img);
        bytes.insert(bytes.end(), rec.begin(), rec.end());
    }
    write_file(directory + "/test_batch.bin", bytes);
}

DatasetSplit stratified_holdout(const Dataset& train, int per_class, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(kNumClasses);
    for (std::size_t i = 0; i < train.size(); ++i) by_class[train[i].label].push_back(i);
    Rng rng(seed);
    std::vector<bool> to_val(train.size(), false);
    for (int c = 0; c < kNumClasses; ++c) {
        MCML_CHECK(static_cast<int>(by_class[c].size()) >= per_class,
                   "not enough images of class " + std::to_string(c) + " for the holdout");
        Rng class_rng = rng.fork(static_cast<std::uint64_t>(c));
        std::vector<std::size_t> idx = by_class[c];
        class_rng.shuffle(idx);
        for (int i = 0; i < per_class; ++i) to_val[idx[i]] = true;
    }
    DatasetSplit split;
    for (std::size_t i = 0; i < train.size(); ++i)
        (to_val[i] ? split.validation : split.train).push_back(train[i]);
    return split;
}

Dataset stratified_subset(const Dataset& data, int per_class, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(kNumClasses);
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label].push_back(i);
    Rng rng(seed);
    std::vector<bool> keep(data.size(), false);
    for (int c = 0; c < kNumClasses; ++c) {
        Rng class_rng = rng.fork(static_cast<std::uint64_t>(c));
        std::vector<std::size_t> idx = by_class[c];
        class_rng.shuffle(idx);
        int take = std::min<int>(per_class, static_cast<int>(idx.size()));
        for (int i = 0; i < take; ++i) keep[idx[i]] = true;
    }
    Dataset out;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (keep[i]) out.push_back(data[i]);
    return out;
}

LabeledVectors synth_blobs(int classes, int dims, int per_class, double separation,
                           std::uint64_t seed) {
    MCML_CHECK(classes > 0 && dims > 0 && per_class > 0, "synth_blobs: counts must be positive");
    // Class means on distinct binary patterns scaled by `separation`, so any
    // two means are at least `separation` apart.
    std::vector<std::vector<float>> means(classes, std::vector<float>(dims, 0.0f));
    for (int c = 0; c < classes; ++c)
        for (int d = 0; d < dims; ++d)
            if (((c + 1) >> (d % 30)) & 1) means[c][d] = static_cast<float>(separation);
    Rng rng(seed);
    LabeledVectors out;
    out.dims = dims;
    for (int c = 0; c < classes; ++c)
        for (int i = 0; i < per_class; ++i) {
            std::vector<float> x(dims);
            for (int d = 0; d < dims; ++d)
                x[d] = means[c][d] + static_cast<float>(rng.normal());
            out.x.push_back(std::move(x));
            out.y.push_back(c);
        }
    // Interleave classes so mini-batches are mixed.
    std::vector<std::size_t> order(out.x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    LabeledVectors shuffled;
    shuffled.dims = dims;
    for (std::size_t i : order) {
        shuffled.x.push_back(out.x[i]);
        shuffled.y.push_back(out.y[i]);
    }
    return shuffled;
}

Dataset blobs_to_images(const LabeledVectors& v) {
    Dataset out;
    out.reserve(v.x.size());
    for (std::size_t i = 0; i < v.x.size(); ++i) {
        LabeledImage li;
        li.label = v.y[i];
        li.image = ImageTensor(kImageHeight, kImageWidth, kImageChannels);
        std::size_t n = std::min<std::size_t>(v.x[i].size(), li.image.data.size());
        std::copy(v.x[i].begin(), v.x[i].begin() + n, li.image.data.begin());
        out.push_back(std::move(li));
    }
    return out;
}

Dataset make_synthetic_images(int per_class, std::uint64_t seed, double noise,
                              std::uint64_t pattern_seed) {
    // Each class is a handful of smooth colour-field variants (a0 + two
    // sinusoids per channel, random low frequencies and phases); a sample
    // draws one variant, shifts it, jitters brightness and adds pixel
    // noise. Multimodal classes keep model capacity relevant. The pattern
    // stream is separate from the sample stream so several seeds share one
    // class definition.
    constexpr int kVariants = 4;
    Rng pattern_rng(pattern_seed);
    Rng rng(seed);
    struct Wave {
        float a0, a1, a2, kx1, ky1, p1, kx2, ky2, p2;
    };
    std::vector<std::array<std::array<Wave, 3>, kVariants>> waves(kNumClasses);
    for (int c = 0; c < kNumClasses; ++c)
        for (int v = 0; v < kVariants; ++v)
            for (int ch = 0; ch < 3; ++ch) {
                Wave w;
                w.a0 = pattern_rng.uniform_f(0.35f, 0.65f);
                w.a1 = pattern_rng.uniform_f(0.10f, 0.22f);
                w.a2 = pattern_rng.uniform_f(0.06f, 0.16f);
                w.kx1 = static_cast<float>(pattern_rng.below(3) + 1);
                w.ky1 = static_cast<float>(pattern_rng.below(3) + 1);
                w.p1 = pattern_rng.uniform_f(0.0f, 6.283f);
                w.kx2 = static_cast<float>(pattern_rng.below(4) + 1);
                w.ky2 = static_cast<float>(pattern_rng.below(4) + 1);
                w.p2 = pattern_rng.uniform_f(0.0f, 6.283f);
                waves[c][v][ch] = w;
            }
    Dataset out;
    out.reserve(static_cast<std::size_t>(per_class) * kNumClasses);
    const float tau = 6.2831853f;
    for (int c = 0; c < kNumClasses; ++c)
        for (int i = 0; i < per_class; ++i) {
            LabeledImage li;
            li.label = c;
            li.image = ImageTensor(kImageHeight, kImageWidth, kImageChannels);
            int variant = static_cast<int>(rng.below(kVariants));
            int dx = static_cast<int>(rng.below(9)) - 4;
            int dy = static_cast<int>(rng.below(9)) - 4;
            float bright = rng.uniform_f(-0.12f, 0.12f);
            for (int r = 0; r < kImageHeight; ++r)
                for (int col = 0; col < kImageWidth; ++col)
                    for (int ch = 0; ch < 3; ++ch) {
                        const Wave& w = waves[c][variant][ch];
                        float x = static_cast<float>((col + dx + 64) % 32) / 32.0f;
                        float y = static_cast<float>((r + dy + 64) % 32) / 32.0f;
                        float v = w.a0 + w.a1 * std::sin(tau * (w.kx1 * x + w.ky1 * y) + w.p1) +
                                  w.a2 * std::sin(tau * (w.kx2 * x - w.ky2 * y) + w.p2);
                        v += bright + static_cast<float>(rng.normal() * noise);
                        v = std::clamp(v, 0.0f, 1.0f);
                        // Byte-quantize so written records round-trip exactly.
                        std::uint8_t b = static_cast<std::uint8_t>(std::lround(v * 255.0f));
                        li.image.at(r, col, ch) = static_cast<float>(b) / 255.0f;
                    }
            out.push_back(std::move(li));
        }
    Rng order_rng = rng.fork(99);
    std::vector<std::size_t> order(out.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    Dataset shuffled;
    shuffled.reserve(out.size());
    for (std::size_t i : order) shuffled.push_back(std::move(out[i]));
    return shuffled;
}

void standardize_split(DatasetSplit& split) {
    double mean[3] = {0, 0, 0}, var[3] = {0, 0, 0};
    std::size_t n = 0;
    for (const auto& li : split.train) {
        for (int r = 0; r < li.image.height; ++r)
            for (int c = 0; c < li.image.width; ++c)
                for (int ch = 0; ch < 3; ++ch) mean[ch] += li.image.at(r, c, ch);
        n += static_cast<std::size_t>(li.image.height) * li.image.width;
    }
    for (int ch = 0; ch < 3; ++ch) mean[ch] /= static_cast<double>(n);
    for (const auto& li : split.train)
        for (int r = 0; r < li.image.height; ++r)
            for (int c = 0; c < li.image.width; ++c)
                for (int ch = 0; ch < 3; ++ch) {
                    double d = li.image.at(r, c, ch) - mean[ch];
                    var[ch] += d * d;
                }
    for (int ch = 0; ch < 3; ++ch) var[ch] = std::sqrt(var[ch] / static_cast<double>(n)) + 1e-8;
    auto apply = [&](Dataset& ds) {
        for (auto& li : ds)
            for (int r = 0; r < li.image.height; ++r)
                for (int c = 0; c < li.image.width; ++c)
                    for (int ch = 0; ch < 3; ++ch)
                        li.image.at(r, c, ch) = static_cast<float>(
                            (li.image.at(r, c, ch) - mean[ch]) / var[ch]);
    };
    apply(split.train);
    apply(split.validation);
    apply(split.test);
}

std::vector<float> flatten(const ImageTensor& img) { return img.data; }

} // namespace mcml
