#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace overfit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Dataset;

/// One hidden ReLU layer: rows of `weights` are the incoming weight vectors.
struct Layer {
    Matrix weights;  // out x in
    Vector biases;   // out
};

/// Fully connected ReLU network with a linear read-out and no output bias.
///
/// Depth 2 is the analysed class N(x) = sum_j v_j relu(w_j . x + b_j). Deeper
/// networks stack more hidden layers and are only used for experiments.
struct Network {
    int input_dim = 0;
    std::vector<Layer> layers;  // hidden layers, first to last
    Vector output_weights;
    bool output_weights_trainable = true;
    bool bias_free = false;  // biases pinned at zero and excluded from the parameter vector

    static Network two_layer(Matrix hidden_weights, Vector biases, Vector output_weights,
                             bool output_weights_trainable = true, bool bias_free = false);

    int depth() const { return static_cast<int>(layers.size()) + 1; }
    int width() const { return static_cast<int>(output_weights.size()); }

    // Depth-2 accessors.
    const Matrix& hidden_weights() const { return layers.front().weights; }
    Matrix& hidden_weights() { return layers.front().weights; }
    const Vector& biases() const { return layers.front().biases; }
    Vector& biases() { return layers.front().biases; }

    /// Throws std::invalid_argument on inconsistent shapes, non-finite entries,
    /// or an unbalanced fixed output pattern.
    void validate() const;

    /// Number of scalar parameters; `trainable_only` drops pinned blocks.
    std::size_t num_params(bool trainable_only = false) const;
};

/// Parameter vector layout: for each layer, weights row-major then biases;
/// output weights last. Pinned blocks are skipped when `trainable_only`.
Vector flatten(const Network& net, bool trainable_only = false);
Network unflatten(const Network& shape, const Eigen::Ref<const Vector>& params,
                  bool trainable_only = false);

double forward(const Network& net, const Eigen::Ref<const Vector>& x);

/// Gradient of N(x) with respect to every parameter, returned in the shape of
/// the network itself. `subgrad_at_zero` is the value used for relu'(0).
Network forward_grad(const Network& net, const Eigen::Ref<const Vector>& x,
                     double subgrad_at_zero = 0.0);

double param_norm_sq(const Network& net);
double trainable_norm_sq(const Network& net);

/// sum_j v_j relu(b_j); depth 2 only.
double bias_sum(const Network& net);

Network scaled(const Network& net, double c);

/// y_i N(x_i) for every sample.
Vector margins(const Network& net, const Dataset& ds);

/// Rescales an interpolating network so that its smallest margin equals one.
/// All parameters scale by margin^{-1/depth}; with pinned output weights only
/// the hidden parameters scale, by margin^{-1/(depth-1)}.
Network rescale_to_unit_margin(const Network& net, const Dataset& ds);

void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace overfit
