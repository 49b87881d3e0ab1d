#pragma once

#include <vector>

#include "overfit/data.hpp"
#include "overfit/io.hpp"
#include "overfit/network.hpp"
#include "overfit/trainer.hpp"

namespace overfit {

/// Distance of a network from the KKT conditions of
///   min ||theta||^2  s.t.  y_i N(x_i) >= 1.
struct KktReport {
    std::vector<double> duals;            // lambda_i >= 0, zero off the support
    double stationarity_rel_residual = 0.0;  // ||theta - sum lambda_i y_i grad N(x_i)|| / ||theta||
    double min_margin = 0.0;
    double dual_min = 0.0;
    double comp_slack_violation = 0.0;    // max_i lambda_i |y_i N(x_i) - 1|
    std::vector<int> support_set;         // samples with margin <= 1 + margin_tol
    int iterations = 0;
    int iteration_budget = 0;
};

/// Columns y_i grad_theta N(x_i) of a depth-2 network over the trainable
/// parameters, applied without forming the (params x m) matrix.
class GradientOperator {
public:
    GradientOperator(const Network& net, const Dataset& ds, double subgrad_at_zero = 0.0);

    int num_samples() const { return static_cast<int>(labels_.size()); }

    /// sum_i u_i y_i grad N(x_i), as a network-shaped parameter set.
    Network apply(const Eigen::Ref<const Vector>& u) const;
    /// (y_i <grad N(x_i), r>)_i for a network-shaped r.
    Vector apply_transpose(const Network& r) const;
    /// Gram matrix of the columns: y_i y_k <grad N(x_i), grad N(x_k)>.
    Matrix gram() const;

    const Network& net() const { return net_; }

private:
    Network net_;
    const Matrix& inputs_;
    Vector labels_;
    Matrix act_;   // relu(pre), n x m
    Matrix mask_;  // relu'(pre), n x m
};

struct DualSolve {
    Vector duals;  // over the given support, in order
    double rel_residual = 0.0;
    int iterations = 0;
};

/// Nonnegative least squares  min_{lambda >= 0} ||theta - A_S lambda||  over
/// the support columns, by projected gradient followed by an exact solve on
/// the detected active set.
DualSolve solve_stationarity_duals(const GradientOperator& op, const Network& target,
                                   const std::vector<int>& support, int max_iterations = 10000,
                                   double rel_tol = 1e-10);

inline constexpr double kTrainedMarginTol = 1e-3;
inline constexpr double kConstructionMarginTol = 1e-9;

/// Dual recovery for a unit-margin network. Depth 2 only; rejects networks
/// that do not interpolate or whose smallest margin is below 1 - margin_tol.
KktReport recover_duals(const Network& net, const Dataset& ds, double margin_tol = kTrainedMarginTol,
                        double subgrad_at_zero = 0.0);

struct KktCheckpointReport {
    int epoch = 0;
    KktReport report;
};

/// Rescales every interpolating checkpoint to unit margin and certifies it;
/// non-interpolating checkpoints are skipped.
std::vector<KktCheckpointReport> kkt_distance_along_training(const std::vector<Checkpoint>& checkpoints,
                                                             const Dataset& ds,
                                                             double margin_tol = kTrainedMarginTol);

struct BiasPositivity {
    bool all_bias_nonneg = false;
    double bias_gap = 0.0;  // sum_{v_j = +1} b_j - sum_{v_j = -1} b_j
};

/// Fixed +1/-1 output weights only.
BiasPositivity bias_positivity_check(const Network& net);

json to_json(const KktReport& rep);

}  // namespace overfit
