#pragma once

#include "mcml/cnn_model.hpp"

namespace mcml {

struct InplaceResult {
    std::vector<float> logits;
    std::uint64_t measured_peak_bytes = 0; // peak live elements, 1 byte each
    std::uint64_t aux_bytes = 0;           // arena growth beyond the input buffer
};

// Executes the model inside a single arena seeded with the image. Outputs
// are computed into a per-step register, the inputs they retire are freed,
// and the values land only in free slots; touching a live slot raises an
// internal error. Channel-growing convolutions follow the herringbone
// order, everything else is row-major. Logits match forward_naive and
// measured_peak_bytes never exceeds the cnn_footprint activation bound.
InplaceResult forward_inplace(const CnnModel& model, const ImageTensor& image);

} // namespace mcml
