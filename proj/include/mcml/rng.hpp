#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mcml {

// Deterministic splitmix64 stream. The standard <random> engines are portable
// but the distributions are not, so both the generator and the draw helpers
// live here. Same seed gives the same stream on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    float uniform_f(float lo, float hi) { return static_cast<float>(uniform(lo, hi)); }

    // Standard normal via Box-Muller (no cached spare, so the state alone
    // captures the stream position).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream for a subtask.
    Rng fork(std::uint64_t stream_id) {
        std::uint64_t s = state_ ^ (0x632be59bd9b4e019ULL * (stream_id + 1));
        Rng child(s);
        child.next_u64();
        return child;
    }

    std::uint64_t serialize() const { return state_; }
    static Rng deserialize(std::uint64_t state) {
        Rng r;
        r.state_ = state;
        return r;
    }

private:
    std::uint64_t state_;
};

} // namespace mcml
