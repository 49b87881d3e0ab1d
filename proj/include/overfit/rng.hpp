#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace overfit {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent substreams from a base seed.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = mix64(base);
    for (auto k : keys) h = mix64(h ^ mix64(k));
    return h;
}

inline Rng make_rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Rng(seq);
}

/// Uniform point on S^{d-1}: a normalized vector of independent standard normals.
inline Eigen::VectorXd sample_sphere(Rng& rng, int d) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd x(d);
    double nrm = 0.0;
    do {
        for (int k = 0; k < d; ++k) x[k] = gauss(rng);
        nrm = x.norm();
    } while (nrm == 0.0);
    return x / nrm;
}

}  // namespace overfit
