#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "overfit/data.hpp"
#include "overfit/network.hpp"

namespace overfit {

enum class Loss { Logistic, Exponential };
enum class Reduction { Sum, Mean };

Loss loss_from_string(const std::string& s);
std::string to_string(Loss loss);

/// l(z) and l'(z), evaluated without overflow.
double loss_value(Loss loss, double z);
double loss_slope(Loss loss, double z);

struct TrainConfig {
    Loss loss = Loss::Logistic;
    Reduction reduction = Reduction::Sum;
    double learning_rate = 0.1;
    int epochs = 20000;
    int batch_size = 0;  // 0 = full batch
    int width = 1000;
    int depth = 2;
    double init_scale = 1.0;         // hidden weights ~ N(0, init_scale^2 / fan_in)
    double output_init_scale = 0.0;  // output weights ~ N(0, s^2); 0 selects 1/sqrt(width)
    double bias_init_scale = 0.0;    // biases ~ N(0, s^2); 0 keeps them at zero
    bool spread_kinks = false;       // d = 1, depth 2: b_j = -w_j u_j with u_j ~ Unif[0,1]
    bool output_weights_trainable = true;  // false pins a balanced +1/-1 pattern
    bool bias_free = false;
    double subgrad_at_zero = 0.0;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // 0 = no intermediate networks kept

    /// Throws std::invalid_argument for an unusable configuration.
    void validate() const;
};

struct TraceRecord {
    int epoch = 0;
    int train_errors = 0;
    double loss = 0.0;
    double min_margin = 0.0;
    double norm_margin = 0.0;  // min_margin / ||theta||^2
    double norm_sq = 0.0;
    double bias_sum = 0.0;     // NaN for depth > 2
};

struct Checkpoint {
    int epoch = 0;
    Network net;
};

struct TrainTrace {
    std::vector<TraceRecord> records;
    std::vector<Checkpoint> checkpoints;
    Network final_net;
    std::optional<int> interpolation_epoch;
    bool diverged = false;
    std::string message;
};

/// Initial parameters as used by train(); exposed for tests.
Network initial_network(const TrainConfig& config, int input_dim);

/// Gradient descent on sum_i l(y_i N(x_i)) starting from `init`.
TrainTrace train_from(const TrainConfig& config, const Dataset& ds, Network init);

/// Draws the initialisation from the config seed, then runs train_from().
TrainTrace train(const TrainConfig& config, const Dataset& ds);

struct InterpolationCheck {
    bool flag = false;
    int worst_index = -1;
    double worst_margin = 0.0;
};

InterpolationCheck interpolates(const Network& net, const Dataset& ds);

/// Records are kept for every epoch up to 100, then every 100 epochs, plus the last.
bool is_log_epoch(int epoch, int total_epochs);

void write_trace_csv(const TrainTrace& trace, const std::string& path);

}  // namespace overfit
