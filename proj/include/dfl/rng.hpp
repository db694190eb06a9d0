#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

// All randomness in the library flows through this header. Every stream is
// keyed by (seed, purpose, indices...) so results are a pure function of the
// configuration and never depend on scheduling or thread count. The engine is
// std::mt19937_64, whose output sequence the standard pins down exactly; the
// distribution transforms are written out here because the stdlib ones are
// implementation-defined.

namespace dfl::rng {

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Purpose tags keep unrelated streams independent of each other.
enum class Stream : std::uint64_t {
    init_model = 1,
    class_means = 2,
    class_noise = 3,
    split = 4,
    shard = 5,
    epoch_shuffle = 6,
    train = 7,
    partition = 8,
    dataset_seed = 9,
};

inline std::uint64_t derive(std::uint64_t seed, Stream purpose, std::uint64_t a = 0,
                            std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = mix64(seed ^ 0x8f1bbcdcbfa53e0bULL);
    h = mix64(h ^ static_cast<std::uint64_t>(purpose));
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return h;
}

inline std::mt19937_64 engine(std::uint64_t derived_seed) {
    return std::mt19937_64(derived_seed);
}

// Uniform in [0, 1), 53 mantissa bits.
inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

// Unbiased integer in [0, n) via rejection.
inline std::uint64_t below(std::mt19937_64& g, std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t v = g();
    while (v >= limit) v = g();
    return v % n;
}

// Standard normal, Box-Muller. Consumes two engine outputs per value.
inline double normal(std::mt19937_64& g) {
    double u1 = uniform01(g);
    double u2 = uniform01(g);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Fisher-Yates.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& g) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(below(g, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace dfl::rng
