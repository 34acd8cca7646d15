#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ssod {

// All randomness in the library flows through Rng streams derived from a
// single experiment seed. Streams are keyed by (seed, purpose, indices), so
// any step/scene can rebuild its stream without replaying history; this is
// what makes checkpoint resume and parallel generation bit-exact.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (0x9e3779b97f4a7c15ULL + b));
}

class Rng {
   public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    // Uniform in [0, 1).
    double uniform() {
        // 53 random mantissa bits; avoids distribution objects whose output
        // sequences are not pinned by the standard.
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(engine_() % span);
    }

    // Box-Muller; no cached spare so the draw count is predictable.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * mag * std::cos(2.0 * M_PI * u2);
    }

    std::uint64_t raw() { return engine_(); }

   private:
    std::mt19937_64 engine_;
};

// Named stream keys; string hashing kept out of the hot path by using
// small integer tags.
enum class StreamTag : std::uint64_t {
    world_map = 1,
    scene = 2,
    split = 3,
    aug = 4,
    batch_labeled = 5,
    batch_unlabeled = 6,
};

inline Rng make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t i0 = 0,
                       std::uint64_t i1 = 0, std::uint64_t i2 = 0) {
    std::uint64_t k = mix_key(seed, static_cast<std::uint64_t>(tag));
    k = mix_key(k, i0);
    k = mix_key(k, i1);
    k = mix_key(k, i2);
    return Rng(k);
}

}  // namespace ssod
