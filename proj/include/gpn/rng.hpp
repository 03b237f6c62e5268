// SPDX-License-Identifier: Apache-2.0
//
// Seeded RNG used everywhere. splitmix64 core, so streams are cheap to fork
// and the bit stream is identical across platforms; only libm (exp/log/cos)
// enters the Gaussian path.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gpn/common.hpp"

namespace gpn {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // warm up so nearby seeds decorrelate
        splitmix64(state_);
        splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    std::int64_t below(std::int64_t n) {
        return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Independent stream derived from this one's seed and a salt.
    Rng fork(std::uint64_t salt) const {
        std::uint64_t s = state_ ^ (0xd1b54a32d192ed03ULL * (salt + 1));
        return Rng(s);
    }

    void fill_gaussian(Vec& v, double sigma) {
        for (double& x : v) x = gaussian() * sigma;
    }

    void fill_uniform(Vec& v, double lo, double hi) {
        for (double& x : v) x = uniform(lo, hi);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(static_cast<std::int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Hash a label into a salt for Rng::fork. FNV-1a.
inline std::uint64_t stream_salt(const char* label) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char* p = label; *p; ++p) {
        h ^= static_cast<std::uint64_t>(*p);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace gpn
