#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace norface {

/// Deterministic pseudo-random generator with splittable substreams.
///
/// The algorithm is splitmix64: identical seeds yield bit-identical draw
/// sequences on every platform, and `split(id)` derives an independent child
/// stream from the base seed without consuming state from the parent.
class Rng {
public:
    static constexpr const char* kAlgorithm = "splitmix64";

    explicit Rng(std::uint64_t seed) : base_seed_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller. Two uniforms consumed per draw so the
    /// stream position never depends on a cached spare.
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::vector<double> normal_vector(std::size_t n, double scale = 1.0) {
        std::vector<double> out(n);
        for (auto& v : out) v = scale * normal();
        return out;
    }

    /// Child stream derived from (base seed, stream id). Children with
    /// distinct ids are independent regardless of parent consumption.
    Rng split(std::uint64_t stream_id) const {
        std::uint64_t z = base_seed_ ^ (0x9E3779B97F4A7C15ULL * (stream_id + 1));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t base_seed() const { return base_seed_; }

private:
    std::uint64_t base_seed_;
    std::uint64_t state_;
};

} // namespace norface
