#pragma once

#include <cstdint>
#include <string>

namespace mcml {

// Byte accounting: 4 bytes per dense parameter, 8 bytes per sparse nonzero
// (4-byte value + 4-byte index), plus peak live activation bytes for CNNs
// (zero for the other families). All integer arithmetic.
struct Footprint {
    std::uint64_t dense_param_count = 0;
    std::uint64_t sparse_nonzero_count = 0;
    std::uint64_t activation_peak_bytes = 0;
    std::uint64_t total_bytes = 0;
    std::uint64_t centi_kb = 0; // total_bytes / 1024, rounded half-up to 2 decimals

    double total_kb() const { return static_cast<double>(centi_kb) / 100.0; }
    std::string kb_string() const; // e.g. "7.57"
    std::uint64_t param_bytes() const { return total_bytes - activation_peak_bytes; }
};

Footprint footprint_bytes(std::uint64_t dense_count, std::uint64_t sparse_nnz,
                          std::uint64_t activation_peak);

} // namespace mcml
