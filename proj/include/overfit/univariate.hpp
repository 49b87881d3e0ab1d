#pragma once

#include <optional>
#include <string>
#include <vector>

#include "overfit/data.hpp"
#include "overfit/io.hpp"
#include "overfit/network.hpp"

namespace overfit {

/// Exact representation of a univariate depth-2 ReLU network on [0, inf):
///   N(x) = base_value + base_slope * x + sum_{t_k < x} slope_deltas[k] * (x - t_k)
/// with strictly increasing kinks 0 < t_k. Kinks at or left of 0 are folded
/// into the base line, coincident kinks are merged, and kinks whose merged
/// delta is exactly zero are dropped.
struct PiecewiseLinear {
    std::vector<double> breakpoints;
    std::vector<double> slope_deltas;
    double base_value = 0.0;
    double base_slope = 0.0;

    double operator()(double x) const;
    /// Slope of the piece that contains x (right derivative at a kink).
    double slope_at(double x) const;
    /// Largest |slope| over the pieces that meet [lo, hi].
    double max_abs_slope(double lo, double hi) const;
    /// Lebesgue measure of {x in [lo, hi] : N(x) <= 0} and {N(x) > 0}.
    double nonpositive_measure(double lo, double hi) const;
    double positive_measure(double lo, double hi) const;
    /// Largest value on [lo, hi] (attained at an end point or a kink).
    double max_on(double lo, double hi) const;
    double min_on(double lo, double hi) const;
};

PiecewiseLinear to_piecewise(const Network& net);

/// Pr_{x ~ Unif[0,1]}[N(x) <= 0], computed exactly from the pieces.
double exact_clean_error_1d(const PiecewiseLinear& pw);

/// Kinks inside the open interval (a, b) at which the slope increases.
int count_slope_increases(const PiecewiseLinear& pw, double a, double b);

struct NegativeRun {
    int first = 0;  // position in sorted order
    int length = 0;
    std::optional<int> witness;  // sorted position l with N < 0 on [x_l, x_{l+1}]
};

/// Maximal runs of >= 5 consecutive -1 labels (consecutive after sorting the
/// inputs), each with the first segment between two run members on which N
/// stays strictly negative, if there is one.
std::vector<NegativeRun> negative_run_witness(const PiecewiseLinear& pw, const Dataset& ds);

struct Segment {
    int left = 0;  // positions in sorted order; original indices in `order`
    int right = 0;
    double x_left = 0.0, x_right = 0.0;
    int label_left = 0, label_right = 0;
    double value_left = 0.0, value_right = 0.0;
    bool is_linear = false;
    double negative_measure = 0.0;
};

struct SegmentReport {
    std::vector<int> order;  // original sample index at each sorted position
    std::vector<Segment> segments;
    // (+,-,+) triples, identified by the sorted position of the -1 sample.
    std::vector<int> dip_positions;
    std::vector<bool> dip_left_value_ok;   // N(x_i) = -1 +- value_tol
    std::vector<bool> dip_right_value_ok;  // N(x_{i+1}) = 1 +- value_tol
    std::vector<bool> dip_linear_ok;       // no significant kink in (x_i, x_{i+1})
    // (+,+) segments, by index into `segments`.
    std::vector<int> plus_plus_segments;
    std::vector<bool> plus_plus_ok;  // N >= -value_tol on the whole segment

    bool all_ok() const;
};

SegmentReport check_segment_structure(const PiecewiseLinear& pw, const Dataset& ds, double value_tol,
                                      double linearity_tol);

// ---------------------------------------------------------------------------
// Norm-reducing perturbations of univariate networks.

enum class PerturbationKind {
    ShiftKink,     // scale v_{j1} by (1 - delta), move b_{j1}, rescale v_{j2}
    Transfer,      // scale v_{j1} by (1 - delta), fold its share into neuron j2
    NegativeSink,  // the Transfer formula with a descending j1 and ascending j2
    ScaleOnly,     // ShiftKink with no partner neuron: only v_{j1} shrinks
};

std::string to_string(PerturbationKind kind);

/// The perturbed parameters for neurons j1, j2 at step size delta. `j2` is
/// ignored for ScaleOnly. Returns an identical network at delta = 0.
Network perturb(const Network& net, PerturbationKind kind, int j1, int j2, double delta);

/// Limit of (||theta||^2 - ||theta_delta||^2) / (2 delta) as delta -> 0.
double leading_norm_coefficient(const Network& net, PerturbationKind kind, int j1, int j2);

struct FalsifierResult {
    bool found = false;
    PerturbationKind kind = PerturbationKind::ShiftKink;
    int j1 = -1, j2 = -1;
    double delta = 0.0;
    double norm_decrease = 0.0;
    int candidates_tried = 0;
    std::string description;
};

/// Searches the perturbation families over admissible neuron pairs and the
/// given step sizes for a feasible (all margins >= 1) parameter with strictly
/// smaller norm. Absence of a hit is only "no improvement found at this grid
/// resolution", never a proof of local minimality.
FalsifierResult local_min_falsifier(const Network& net, const Dataset& ds, const std::vector<double>& delta_grid);

/// {2^-k : k = 4..20}
std::vector<double> default_delta_grid();

json to_json(const SegmentReport& rep);
json to_json(const NegativeRun& run);
json to_json(const FalsifierResult& res);

}  // namespace overfit
