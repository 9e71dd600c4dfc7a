#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace lazylab {

// Deterministic random streams.
//
// Every random quantity in the library is drawn from a named substream of a
// single 64-bit run seed.  Substreams are derived by hashing the parent seed
// with one or more tags (splitmix64 finalizer), so the draw sequence of any
// component is independent of evaluation order and worker count:
//
//   run seed
//     +-- derive(seed, "dataset")
//     +-- derive(seed, "params", layer)        one stream per weight block
//     +-- derive(seed, "mc", pair_index)       Monte-Carlo oracles
//
// The generator is xoshiro256++; Gaussian variates use the Marsaglia polar
// method (pairs, one cached).

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
    std::uint64_t s = parent ^ (0x6a09e667f3bcc909ULL + tag);
    std::uint64_t z = detail::splitmix64(s);
    return z ^ detail::splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag) {
    return derive_seed(parent, detail::hash_tag(tag));
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag,
                                 std::uint64_t index) {
    return derive_seed(derive_seed(parent, tag), index);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform on [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // standard normal, Marsaglia polar method
    double gaussian() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v * f;
        has_cached_ = true;
        return u * f;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4] = {};
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace lazylab
