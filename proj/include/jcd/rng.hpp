#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace jcd {

// xoshiro256** with splitmix64 seeding. All randomness in this project flows
// through this generator so that identical seeds reproduce identical streams
// regardless of platform or standard library. Stream contract:
//   - seed expansion: four sequential splitmix64 outputs form the state
//   - u01():        (next() >> 11) * 2^-53, in [0, 1)
//   - uniform_int(n): Lemire bounded rejection; n <= 1 consumes nothing
//   - normal():      Box-Muller, two draws per value, no caching
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t z = seed;
        for (auto& word : state_) word = splitmix64(z);
    }

    uint64_t next() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1).
    double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform double in (0, 1]; safe as a log() argument.
    double u01_open() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

    // Uniform integer in [0, n). n <= 1 returns 0 without consuming the stream.
    uint64_t uniform_int(uint64_t n) {
        if (n <= 1) return 0;
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
        auto low = static_cast<uint64_t>(m);
        if (low < n) {
            const uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next()) * n;
                low = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

    // Uniform integer in [lo, hi) — hi exclusive.
    int64_t range(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(uniform_int(static_cast<uint64_t>(hi - lo)));
    }

    double uniform(double lo, double hi) { return lo + u01() * (hi - lo); }

    // Standard normal via Box-Muller.
    double normal() {
        const double u1 = u01_open();
        const double u2 = u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates shuffle on indices [0, n).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    uint64_t state_[4];
};

} // namespace jcd
