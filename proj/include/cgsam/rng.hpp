#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cgsam {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_string(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Independent generator for one purpose ("init", "sampling", "shuffle", ...)
/// derived from a run seed and up to two integer keys.
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0,
                                 std::uint64_t b = 0)
{
    std::uint64_t h = splitmix64(seed ^ hash_string(purpose));
    h = splitmix64(h ^ splitmix64(a + 0x51ed270b27c4f1a3ULL));
    h = splitmix64(h ^ splitmix64(b + 0x2545f4914f6cdd1dULL));
    return std::mt19937_64(h);
}

/// Uniform integer in [0, n) from raw 64-bit draws (same result on every standard library).
inline std::uint64_t uniform_index(std::mt19937_64& gen, std::uint64_t n)
{
    const std::uint64_t limit = ~0ULL - (~0ULL % n);
    std::uint64_t v;
    do {
        v = gen();
    } while (v >= limit);
    return v % n;
}

/// Uniform real in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

}  // namespace cgsam
