#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mcml {

// Thrown on contract violations (bad shapes, invalid densities, malformed
// files). Internal scheduling invariants use logic_error via MCML_ASSERT.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define MCML_CHECK(cond, msg)                                                  \
    do {                                                                       \
        if (!(cond)) throw ::mcml::Error(msg);                                 \
    } while (0)

#define MCML_ASSERT(cond, msg)                                                 \
    do {                                                                       \
        if (!(cond)) throw std::logic_error(std::string("internal: ") + msg);  \
    } while (0)

constexpr int kNumClasses = 10;
constexpr int kImageHeight = 32;
constexpr int kImageWidth = 32;
constexpr int kImageChannels = 3;
constexpr int kFlatImageDim = kImageHeight * kImageWidth * kImageChannels;

} // namespace mcml
