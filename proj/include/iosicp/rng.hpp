#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace iosicp {

// Splitmix64-based stream RNG. The standard <random> distributions are
// implementation-defined, so every draw here is hand-rolled to keep results
// bit-identical across compilers. Streams are derived by hashing a base seed
// with a name and indices; replaying a derivation reproduces every draw.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return split(h);
    }

    static std::uint64_t hash_name(std::string_view name) {
        std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a offset basis
        for (unsigned char c : name) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    // Derived stream: hash(seed, name, indices...).
    template <typename... Idx>
    static Rng stream(std::uint64_t seed, std::string_view name, Idx... indices) {
        std::uint64_t h = split(seed);
        h = mix(h, hash_name(name));
        ((h = mix(h, static_cast<std::uint64_t>(indices))), ...);
        return Rng(h);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return split(state_);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Box-Muller; draws pairs and caches the second value.
    double normal() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cache_ = r * std::sin(theta);
        has_cache_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

private:
    static std::uint64_t split(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_ = 0;
    double cache_ = 0.0;
    bool has_cache_ = false;
};

}  // namespace iosicp
