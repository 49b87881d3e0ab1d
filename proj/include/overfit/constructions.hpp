#pragma once

#include <cstdint>
#include <vector>

#include "overfit/data.hpp"
#include "overfit/io.hpp"
#include "overfit/kernels.hpp"
#include "overfit/kkt.hpp"
#include "overfit/network.hpp"

namespace overfit {

struct ConstructionResult {
    Network net;
    std::vector<double> per_sample_margins;
    double norm_sq = 0.0;
    double claimed_bound = 0.0;
    bool bound_satisfied = false;  // norm_sq <= claimed_bound up to 1e-9 relative
};

/// Two-block width-n network that pushes every negative sample down along the
/// sum of the negative inputs while a shared positive bias lifts everything
/// else. Needs an even n, d >= 2 and at least one negative label.
ConstructionResult build_feasible_highdim(const Dataset& ds, int n);

struct OrthogonalKktResult {
    Network net;  // bias-free, width |I-| + 1
    std::vector<double> per_sample_margins;
    KktReport kkt;
    ErrorEstimate mc_error;
    double lower_bound = 0.0;  // 1/2 - 2^{-|I-|}
};

/// One neuron w_i = x_i, v_i = -1 per negative sample and a single positive
/// neuron along the sum of the positive inputs, balanced so that |v| = ||w||.
/// Inputs must be unit norm and pairwise orthogonal to 1e-10.
OrthogonalKktResult build_orthogonal_kkt(const Dataset& ds, std::int64_t mc_samples, std::uint64_t seed);

/// Pr_x[w_j . x < 0 for every j with v_j >= 0] for a bias-free depth-2 network.
ErrorEstimate negative_orthant_mass(const Network& net, std::int64_t n_samples, std::uint64_t seed);

json to_json(const ConstructionResult& res);
json to_json(const OrthogonalKktResult& res);

}  // namespace overfit
