#include "mcml/serialize.hpp"

#include <cstring>
#include <fstream>

namespace mcml {

void ByteWriter::f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
}

std::uint8_t ByteReader::u8() {
    MCML_CHECK(pos_ + 1 <= buf_.size(), "read past end of model file");
    return buf_[pos_++];
}

std::int32_t ByteReader::i32() {
    MCML_CHECK(pos_ + 4 <= buf_.size(), "read past end of model file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return static_cast<std::int32_t>(v);
}

float ByteReader::f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void ByteReader::dense_block(std::vector<float>& out, std::size_t count) {
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = f32();
}

SparseMatrix ByteReader::sparse_block(int rows, int cols, std::size_t nnz) {
    SparseMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.entries.resize(nnz);
    std::uint32_t prev = 0;
    for (std::size_t i = 0; i < nnz; ++i) {
        m.entries[i].index = u32();
        m.entries[i].value = f32();
        MCML_CHECK(i == 0 || m.entries[i].index > prev, "sparse indices must increase");
        MCML_CHECK(m.entries[i].index < static_cast<std::uint32_t>(rows) * cols,
                   "sparse index out of range");
        prev = m.entries[i].index;
    }
    return m;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    MCML_CHECK(out.good(), "cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    MCML_CHECK(out.good(), "write failed: " + path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    MCML_CHECK(in.good(), "cannot open: " + path);
    std::streamsize n = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(buf.data()), n);
    MCML_CHECK(in.good(), "read failed: " + path);
    return buf;
}

} // namespace mcml
