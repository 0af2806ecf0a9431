#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace retina {

namespace detail {

// SplitMix64 finalizer (Steele et al.). Bijective mix of a 64-bit word.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

// Counter-based generator: draw i of stream `key` is mix64(key ^ mix64(i)).
// There is no hidden state beyond the counter, so derived streams never
// interact and the whole sequence is reproducible across platforms. All
// randomness in the project flows through this type; std::random
// distributions are avoided because their output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(detail::mix64(seed)) {}

    // Child stream for an index or label. Children of distinct salts are
    // independent; deriving is cheap and does not advance this stream.
    Rng derive(std::uint64_t salt) const { return Rng(key_ ^ detail::mix64(salt), 0); }
    Rng derive(std::string_view label) const { return Rng(key_ ^ detail::fnv1a(label), 0); }
    Rng derive(std::string_view label, std::uint64_t salt) const {
        return derive(label).derive(salt);
    }

    std::uint64_t next_u64() { return detail::mix64(key_ ^ detail::mix64(++counter_)); }

    // Uniform in [0, 1), 53 bits of mantissa.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, n); n must be positive.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = ~0ULL - ~0ULL % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller. log(0) is avoided by the half-open
    // uniform being taken as 1 - u.
    double normal() {
        const double u1 = 1.0 - next_double();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace retina
