#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcml/common.hpp"
#include "mcml/tensor.hpp"

namespace mcml {

// Model files are little-endian: a header (1-byte family tag, then 4-byte
// integer spec fields), followed by the parameter payload as raw dense
// float blocks and sparse blocks of (u32 flat index, f32 value) entries.
// Payload length always equals Footprint.total_bytes minus the activation
// term, which is what the size-model tests pin down.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void i32(std::int32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
    void u32(std::uint32_t v) { i32(static_cast<std::int32_t>(v)); }
    void f32(float v);
    void dense_block(const std::vector<float>& data) {
        for (float v : data) f32(v);
    }
    void sparse_block(const SparseMatrix& m) {
        for (const SparseEntry& e : m.entries) {
            u32(e.index);
            f32(e.value);
        }
    }
    const std::vector<std::uint8_t>& bytes() const { return buf_; }
    std::size_t size() const { return buf_.size(); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

    std::uint8_t u8();
    std::int32_t i32();
    std::uint32_t u32() { return static_cast<std::uint32_t>(i32()); }
    float f32();
    void dense_block(std::vector<float>& out, std::size_t count);
    SparseMatrix sparse_block(int rows, int cols, std::size_t nnz);
    bool done() const { return pos_ == buf_.size(); }
    std::size_t pos() const { return pos_; }

private:
    const std::vector<std::uint8_t>& buf_;
    std::size_t pos_ = 0;
};

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

} // namespace mcml
