#pragma once

#include <cstdint>
#include <functional>

#include "overfit/network.hpp"

namespace overfit {

/// Monte Carlo estimate of a probability with its binomial standard error.
struct ErrorEstimate {
    double point_estimate = 0.0;
    double std_error = 0.0;
    std::int64_t n_samples = 0;

    static ErrorEstimate from_counts(std::int64_t hits, std::int64_t n);
};

// Monte Carlo budgets are split over a fixed number of lanes, each with its
// own seed-derived stream, so results do not depend on the thread count.
inline constexpr int kMonteCarloLanes = 64;

/// N(x_i) for every row of `inputs`.
Vector forward_batch(const Network& net, const Matrix& inputs);

/// Pre-activations W X^T + b 1^T of a depth-2 network (n x m).
Matrix pre_activations(const Network& net, const Matrix& inputs);

/// Pr_{x ~ Unif(S^{d-1})}[N(x) <= 0]. For depth-2 networks with d > width the
/// sampler draws only the projection of x onto the row space of W, which has
/// the same law as projecting a full sphere sample.
ErrorEstimate clean_error_mc(const Network& net, int d, std::int64_t n_samples,
                             std::uint64_t seed);

/// Pr_{x ~ Unif[0,1]}[N(x) <= 0] for a univariate network.
ErrorEstimate clean_error_mc_interval(const Network& net, std::int64_t n_samples,
                                      std::uint64_t seed);

/// Probability over x ~ Unif(S^{d-1}) of `event(Wx)`, where Wx is the vector
/// of projections onto the rows of `directions` (k x d).
using ProjectionEvent = std::function<bool(const Eigen::Ref<const Vector>&)>;
ErrorEstimate sphere_projection_mc(const Matrix& directions, std::int64_t n_samples,
                                   std::uint64_t seed, const ProjectionEvent& event);

/// Straight-line reference implementations. No OpenMP, no projection trick,
/// no BLAS-style products; kept to test and benchmark the kernels above.
namespace serial {

Vector forward_batch(const Network& net, const Matrix& inputs);
ErrorEstimate clean_error_mc(const Network& net, int d, std::int64_t n_samples,
                             std::uint64_t seed);
ErrorEstimate clean_error_mc_interval(const Network& net, std::int64_t n_samples,
                                      std::uint64_t seed);

}  // namespace serial

}  // namespace overfit
