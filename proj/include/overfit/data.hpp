#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace overfit {

enum class Distribution { Interval1d, Sphere };

std::string to_string(Distribution dist);
Distribution distribution_from_string(const std::string& s);

/// Noisy binary dataset: clean target is +1 everywhere, each label flipped to
/// -1 independently with probability p.
struct Dataset {
    Eigen::MatrixXd inputs;  // m x d, one sample per row
    Eigen::VectorXd labels;  // +1 / -1
    double p = 0.0;
    std::uint64_t seed = 0;
    Distribution distribution = Distribution::Sphere;

    int m() const { return static_cast<int>(inputs.rows()); }
    int d() const { return static_cast<int>(inputs.cols()); }
    std::vector<int> positive_indices() const;
    std::vector<int> negative_indices() const;

    /// Throws std::invalid_argument when shapes or labels are inconsistent.
    void validate() const;
};

/// d == 1 draws inputs from Unif[0,1], d >= 2 from Unif(S^{d-1}).
Dataset sample_dataset(int d, int m, double p, std::uint64_t seed);

struct DataPropertyReport {
    double max_abs_inner = 0.0;
    double inner_threshold = 0.0;  // sqrt(2 log(3 m^2 / delta) / d)
    double gram_spectral_norm = 0.0;
    double gram_bound = 0.0;
    int neg_count = 0;
    double neg_threshold = 0.0;  // 3 p m / 2
    bool inner_ok = false;
    bool gram_ok = false;
    bool neg_ok = false;

    bool all_ok() const { return inner_ok && gram_ok && neg_ok; }
};

/// Near-orthogonality, Gram spectral norm and negative-count checks for
/// sphere data. Rejects d == 1.
DataPropertyReport check_data_properties(const Dataset& ds, double delta, double gram_bound = 2.0);

/// Largest eigenvalue of X X^T by power iteration (200 iterations, fixed seed,
/// early exit at relative change 1e-8).
double gram_spectral_norm(const Eigen::MatrixXd& inputs);

struct SpacingStats {
    std::vector<double> gaps;          // m+1 spacings in position order, boundary gaps included
    std::vector<double> ordered_gaps;  // the same spacings sorted ascending
    double max_gap = 0.0;              // over all m+1 spacings
    double max_interior_gap = 0.0;     // over the m-1 gaps between samples
    int small_gap_count = 0;           // interior gaps < 1/(10(m+1))
    int small_gap_count_all = 0;       // all m+1 spacings < 1/(10(m+1))
    bool collision_flag = false;
};

SpacingStats spacing_stats(const Dataset& ds);
SpacingStats spacing_stats(std::vector<double> points);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace overfit
