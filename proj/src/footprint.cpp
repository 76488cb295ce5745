#include "mcml/footprint.hpp"

namespace mcml {

Footprint footprint_bytes(std::uint64_t dense_count, std::uint64_t sparse_nnz,
                          std::uint64_t activation_peak) {
    Footprint f;
    f.dense_param_count = dense_count;
    f.sparse_nonzero_count = sparse_nnz;
    f.activation_peak_bytes = activation_peak;
    f.total_bytes = 4 * dense_count + 8 * sparse_nnz + activation_peak;
    // centi-KB, rounded half-up: floor((bytes * 100 + 512) / 1024)
    f.centi_kb = (f.total_bytes * 100 + 512) / 1024;
    return f;
}

std::string Footprint::kb_string() const {
    std::string whole = std::to_string(centi_kb / 100);
    std::uint64_t frac = centi_kb % 100;
    std::string f = std::to_string(frac);
    if (f.size() < 2) f = "0" + f;
    return whole + "." + f;
}

} // namespace mcml
