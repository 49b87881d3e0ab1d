#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "overfit/io.hpp"
#include "overfit/trainer.hpp"

namespace overfit {

struct SweepGrid {
    std::vector<int> d, m, n, depth{2};
    std::vector<double> p;
    std::vector<std::uint64_t> seeds;

    std::size_t size() const { return d.size() * m.size() * n.size() * depth.size() * p.size() * seeds.size(); }
};

struct SweepOptions {
    TrainConfig base;  // width, depth and seed are overridden per cell
    std::int64_t mc_samples = 100000;
    int workers = 1;
    bool compute_kkt = true;
    std::optional<std::string> model_dir;  // final networks saved as <key>.json when set
};

struct SweepRecord {
    int d = 0, m = 0, n = 0, depth = 0;
    double p = 0.0;
    std::uint64_t seed = 0;
    int train_errors_final = 0;
    std::optional<int> interp_epoch;
    double clean_error = 0.0;
    double clean_error_stderr = 0.0;  // 0 when computed exactly
    double bias_sum = 0.0;            // NaN where undefined
    double bias_gap = 0.0;
    double kkt_residual = 0.0;
    double norm_sq = 0.0;
    double wall_time_s = 0.0;
    std::string status = "ok";
};

inline constexpr const char* kSweepHeader =
    "d,m,n,depth,p,seed,train_errors_final,interp_epoch,clean_error,clean_error_stderr,bias_sum,bias_gap,"
    "kkt_residual,norm_sq,wall_time_s,status";

/// Key used for resumption and for the model file name.
std::string sweep_key(int d, int m, int n, int depth, double p, std::uint64_t seed);

/// Data and training seeds of one cell, derived from the cell's seed and key.
std::uint64_t cell_data_seed(int d, int m, double p, std::uint64_t seed);
std::uint64_t cell_train_seed(int d, int m, int n, int depth, double p, std::uint64_t seed);

/// Trains and evaluates one cell; failures are returned as a record with a
/// non-"ok" status instead of an exception.
SweepRecord run_cell(int d, int m, int n, int depth, double p, std::uint64_t seed, const SweepOptions& opts);

/// Runs every cell of the grid not already present in `csv_path`, appending
/// one line per finished cell. Returns the new records in completion order.
std::vector<SweepRecord> run_sweep(const SweepGrid& grid, const SweepOptions& opts, const std::string& csv_path);

std::vector<SweepRecord> read_sweep_csv(const std::string& path);

/// {"grid": {d, m, n, depth, p, seeds}, "train": {...}, "mc_samples", "compute_kkt", "model_dir"}
std::pair<SweepGrid, SweepOptions> sweep_config_from_json(const json& j);

struct LemmaVerdict {
    std::string id;
    json params;
    int trials = 0;
    int failures = 0;
    double empirical_failure_rate = 0.0;
    double theoretical_bound = 0.0;
    double margin_of_error = 0.0;  // 3 binomial standard deviations at the bound
    bool consistent = false;
};

/// Monte Carlo failure frequency of a probabilistic data lemma against its
/// bound. Ids: spacing_max_gap, spacing_small_gaps (m, delta), inner_product_tail
/// (d, t), gram_norm (d, m, t, c), negative_count (p, m). Missing parameters
/// take defaults; unknown ids are rejected.
LemmaVerdict verify_lemma(const std::string& id, const json& params, int trials, std::uint64_t seed);

json to_json(const LemmaVerdict& v);

}  // namespace overfit
