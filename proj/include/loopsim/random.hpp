#pragma once

#include <cstdint>
#include <random>

#include "loopsim/errors.hpp"

namespace loopsim {

// splitmix64 step; used only to spread seeds, not as the main generator.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic per-stream seed from (master seed, stream index). Trials,
// sweep points and power replicates all derive their streams through this,
// so results never depend on scheduling or thread count.
inline std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t stream_index) {
    std::uint64_t s = master_seed;
    std::uint64_t a = splitmix64(s);
    s ^= stream_index + 0x9e3779b97f4a7c15ULL;
    std::uint64_t b = splitmix64(s);
    return a ^ (b + 0x2545f4914f6cdd1dULL);
}

// A self-contained random stream. mt19937_64 output is fully specified by the
// standard, and the [0,1) mapping below avoids std::uniform_real_distribution,
// whose output is implementation-defined.
class RandomStream {
   public:
    explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

    static RandomStream for_stream(std::uint64_t master_seed, std::uint64_t stream_index) {
        return RandomStream(derive_stream_seed(master_seed, stream_index));
    }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0,1), 53 significant bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

   private:
    std::mt19937_64 gen_;
};

}  // namespace loopsim
