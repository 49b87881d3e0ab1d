#include "overfit/network.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "overfit/data.hpp"
#include "overfit/io.hpp"

namespace overfit {

namespace {

double relu(double z) { return z > 0.0 ? z : 0.0; }

double relu_slope(double z, double at_zero) {
    if (z > 0.0) return 1.0;
    if (z < 0.0) return 0.0;
    return at_zero;
}

}  // namespace

Network Network::two_layer(Matrix hidden_weights, Vector biases, Vector output_weights,
                           bool output_weights_trainable, bool bias_free) {
    Network net;
    net.input_dim = static_cast<int>(hidden_weights.cols());
    net.layers.push_back(Layer{std::move(hidden_weights), std::move(biases)});
    net.output_weights = std::move(output_weights);
    net.output_weights_trainable = output_weights_trainable;
    net.bias_free = bias_free;
    net.validate();
    return net;
}

void Network::validate() const {
    if (layers.empty()) throw std::invalid_argument("network has no hidden layer");
    if (input_dim < 1) throw std::invalid_argument("network input dimension must be >= 1");
    Eigen::Index fan_in = input_dim;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weights.cols() != fan_in)
            throw std::invalid_argument("layer " + std::to_string(l) + " expects fan-in " +
                                        std::to_string(fan_in));
        if (layer.biases.size() != layer.weights.rows())
            throw std::invalid_argument("layer " + std::to_string(l) +
                                        ": bias count differs from row count");
        if (!layer.weights.allFinite() || !layer.biases.allFinite())
            throw std::invalid_argument("layer " + std::to_string(l) + " has non-finite entries");
        if (bias_free && layer.biases.cwiseAbs().maxCoeff() != 0.0)
            throw std::invalid_argument("bias-free network carries nonzero biases");
        fan_in = layer.weights.rows();
    }
    if (output_weights.size() != fan_in)
        throw std::invalid_argument("output weight count differs from last hidden width");
    if (!output_weights.allFinite()) throw std::invalid_argument("output weights are not finite");
    if (!output_weights_trainable) {
        int plus = 0, minus = 0;
        for (double v : output_weights) {
            if (v == 1.0) ++plus;
            else if (v == -1.0) ++minus;
            else throw std::invalid_argument("fixed output weights must be +1 or -1");
        }
        if (plus != minus) throw std::invalid_argument("fixed output pattern must be balanced");
    }
}

std::size_t Network::num_params(bool trainable_only) const {
    std::size_t count = 0;
    for (const auto& layer : layers) {
        count += static_cast<std::size_t>(layer.weights.size());
        if (!(trainable_only && bias_free)) count += static_cast<std::size_t>(layer.biases.size());
    }
    if (!(trainable_only && !output_weights_trainable))
        count += static_cast<std::size_t>(output_weights.size());
    return count;
}

Vector flatten(const Network& net, bool trainable_only) {
    Vector out(static_cast<Eigen::Index>(net.num_params(trainable_only)));
    Eigen::Index k = 0;
    for (const auto& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) out[k++] = layer.weights(r, c);
        if (!(trainable_only && net.bias_free))
            for (Eigen::Index r = 0; r < layer.biases.size(); ++r) out[k++] = layer.biases[r];
    }
    if (!(trainable_only && !net.output_weights_trainable))
        for (Eigen::Index r = 0; r < net.output_weights.size(); ++r) out[k++] = net.output_weights[r];
    return out;
}

Network unflatten(const Network& shape, const Eigen::Ref<const Vector>& params, bool trainable_only) {
    if (static_cast<std::size_t>(params.size()) != shape.num_params(trainable_only))
        throw std::invalid_argument("parameter vector length does not match network shape");
    Network net = shape;
    Eigen::Index k = 0;
    for (auto& layer : net.layers) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = params[k++];
        if (!(trainable_only && net.bias_free))
            for (Eigen::Index r = 0; r < layer.biases.size(); ++r) layer.biases[r] = params[k++];
    }
    if (!(trainable_only && !net.output_weights_trainable))
        for (Eigen::Index r = 0; r < net.output_weights.size(); ++r) net.output_weights[r] = params[k++];
    return net;
}

double forward(const Network& net, const Eigen::Ref<const Vector>& x) {
    if (x.size() != net.input_dim)
        throw std::invalid_argument("input has dimension " + std::to_string(x.size()) +
                                    ", network expects " + std::to_string(net.input_dim));
    Vector h = x;
    for (const auto& layer : net.layers) {
        Vector z = layer.weights * h + layer.biases;
        h = z.unaryExpr(&relu);
    }
    return net.output_weights.dot(h);
}

Network forward_grad(const Network& net, const Eigen::Ref<const Vector>& x, double subgrad_at_zero) {
    if (x.size() != net.input_dim)
        throw std::invalid_argument("input has dimension " + std::to_string(x.size()) +
                                    ", network expects " + std::to_string(net.input_dim));
    const std::size_t depth = net.layers.size();
    std::vector<Vector> activations{x};
    std::vector<Vector> pre;
    for (const auto& layer : net.layers) {
        pre.push_back(layer.weights * activations.back() + layer.biases);
        activations.push_back(pre.back().unaryExpr(&relu));
    }

    Network grad = net;
    grad.output_weights = activations.back();
    Vector upstream = net.output_weights;  // dN / d(activation of the current layer)
    for (std::size_t l = depth; l-- > 0;) {
        Vector delta = upstream.cwiseProduct(
            pre[l].unaryExpr([subgrad_at_zero](double z) { return relu_slope(z, subgrad_at_zero); }));
        grad.layers[l].weights = delta * activations[l].transpose();
        grad.layers[l].biases = net.bias_free ? Vector::Zero(delta.size()) : delta;
        upstream = net.layers[l].weights.transpose() * delta;
    }
    return grad;
}

double param_norm_sq(const Network& net) {
    double total = net.output_weights.squaredNorm();
    for (const auto& layer : net.layers) total += layer.weights.squaredNorm() + layer.biases.squaredNorm();
    return total;
}

double trainable_norm_sq(const Network& net) { return flatten(net, true).squaredNorm(); }

double bias_sum(const Network& net) {
    if (net.depth() != 2) throw std::invalid_argument("bias_sum is defined for depth-2 networks");
    return net.output_weights.dot(net.biases().unaryExpr(&relu));
}

Network scaled(const Network& net, double c) {
    Network out = net;
    for (auto& layer : out.layers) {
        layer.weights *= c;
        layer.biases *= c;
    }
    out.output_weights *= c;
    return out;
}

Vector margins(const Network& net, const Dataset& ds) {
    Vector out(ds.m());
    for (int i = 0; i < ds.m(); ++i) out[i] = ds.labels[i] * forward(net, ds.inputs.row(i).transpose());
    return out;
}

Network rescale_to_unit_margin(const Network& net, const Dataset& ds) {
    const Vector marg = margins(net, ds);
    Eigen::Index worst = 0;
    const double min_margin = marg.minCoeff(&worst);
    if (!(min_margin > 0.0))
        throw std::invalid_argument("network does not interpolate: sample " + std::to_string(worst) +
                                    " has margin " + std::to_string(min_margin));
    Network out = net;
    if (net.output_weights_trainable) {
        const double c = std::pow(min_margin, -1.0 / net.depth());
        return scaled(net, c);
    }
    const double c = std::pow(min_margin, -1.0 / (net.depth() - 1));
    for (auto& layer : out.layers) {
        layer.weights *= c;
        layer.biases *= c;
    }
    return out;
}

void save_network(const Network& net, const std::string& path) { write_json_file(to_json(net), path); }

Network load_network(const std::string& path) { return network_from_json(read_json_file(path)); }

}  // namespace overfit
