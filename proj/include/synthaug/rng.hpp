// Deterministic randomness. The engine is std::mt19937_64 (its raw output is
// pinned by the standard); the real-valued distributions are implemented here
// so results do not depend on the standard library build.
//
// Seed discipline: one master seed fans out to stage seeds through
// derive_seed(master, tag, counter) = splitmix64(master ^ fnv1a(tag) ^ counter).
// Every stage, epoch and batch draws its own derived seed, so any point of a
// run can be reproduced without replaying the stream that led to it.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "synthaug/tensor.hpp"

namespace synthaug {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t counter = 0) {
    return splitmix64(master ^ fnv1a64(tag) ^ (counter * 0xd1342543de82ef95ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        return std::uint64_t((static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

    // Box-Muller; one spare value cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename It>
    void shuffle(It first, It last) {
        const std::size_t n = std::size_t(last - first);
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = std::size_t(uniform_index(i));
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

template <typename Real>
void fill_normal(Tensor<Real>& t, Rng& rng, double mean = 0.0, double stddev = 1.0) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = Real(rng.normal(mean, stddev));
}

template <typename Real>
void fill_uniform(Tensor<Real>& t, Rng& rng, double lo, double hi) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = Real(rng.uniform(lo, hi));
}

}  // namespace synthaug
