#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mtkd {

// Deterministic splittable RNG. Streams are derived from a master seed and
// a purpose tag, so the data pipeline, teacher init, student init, and agent
// init consume independent streams: touching one cannot perturb another.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view stream_tag)
        : state_(mix(seed ^ fnv1a(stream_tag))) {}

    explicit Rng(std::uint64_t raw_state) : state_(raw_state) {}

    // splitmix64
    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1) with 53 bits of entropy
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, one value per call (the pair's second half is discarded
    // to keep the stream position independent of call parity)
    double normal(double mean = 0.0, double stddev = 1.0);

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling avoids modulo bias
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // independent child stream
    Rng split(std::string_view tag) { return Rng(mix(next_u64() ^ fnv1a(tag))); }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
        z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
        return z ^ (z >> 33);
    }

    std::uint64_t state_;
};

inline double Rng::normal(double mean, double stddev) {
    double u1, u2;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    double mag = stddev * std::sqrt(-2.0 * std::log(u1));
    return mean + mag * std::cos(two_pi * u2);
}

}  // namespace mtkd
