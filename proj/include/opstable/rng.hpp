#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace opstable {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Order-sensitive key for nested task indices.
inline std::uint64_t combine_key(std::uint64_t key, std::uint64_t index) {
    return splitmix64(key ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

struct SeedSpec {
    std::uint64_t master = 0;
};

// Counter-based stream: draw k is a hash of (key, k), so any draw can be
// reproduced from its indices alone.
class CounterRng {
public:
    CounterRng(std::uint64_t key, std::uint64_t counter = 0) : key_(key), ctr_(counter) {}
    CounterRng(SeedSpec seed, std::uint64_t stream) : key_(combine_key(splitmix64(seed.master), stream)) {}

    std::uint64_t next() { return splitmix64(key_ ^ splitmix64(ctr_++)); }

    // Uniform on (0, 1), never 0 or 1.
    double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
    double exponential() { return -std::log(uniform()); }
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double r = std::sqrt(-2.0 * std::log(uniform()));
        double phi = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(phi);
        have_spare_ = true;
        return r * std::cos(phi);
    }
    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Van der Corput digit reversal of i in the given base, in [0, 1).
inline double radical_inverse(unsigned i, unsigned base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * (i % base);
        i /= base;
    }
    return r;
}

}  // namespace opstable
