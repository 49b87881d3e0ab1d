#include <stdexcept>

#include "overfit/kernels.hpp"
#include "overfit/rng.hpp"

namespace overfit::serial {

namespace {

double eval(const Network& net, const double* x) {
    std::vector<double> h(x, x + net.input_dim);
    for (const auto& layer : net.layers) {
        std::vector<double> next(static_cast<std::size_t>(layer.weights.rows()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            double z = layer.biases[r];
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) z += layer.weights(r, c) * h[c];
            next[r] = z > 0.0 ? z : 0.0;
        }
        h = std::move(next);
    }
    double out = 0.0;
    for (Eigen::Index j = 0; j < net.output_weights.size(); ++j) out += net.output_weights[j] * h[j];
    return out;
}

}  // namespace

Vector forward_batch(const Network& net, const Matrix& inputs) {
    if (inputs.cols() != net.input_dim) throw std::invalid_argument("input dimension mismatch");
    Vector out(inputs.rows());
    std::vector<double> x(static_cast<std::size_t>(inputs.cols()));
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        for (Eigen::Index c = 0; c < inputs.cols(); ++c) x[c] = inputs(i, c);
        out[i] = eval(net, x.data());
    }
    return out;
}

ErrorEstimate clean_error_mc(const Network& net, int d, std::int64_t n_samples, std::uint64_t seed) {
    if (d < 2) throw std::invalid_argument("sphere Monte Carlo needs d >= 2");
    if (d != net.input_dim) throw std::invalid_argument("network input dimension differs from d");
    if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
    std::int64_t hits = 0;
    for (int lane = 0; lane < kMonteCarloLanes; ++lane) {
        const std::int64_t begin = n_samples * lane / kMonteCarloLanes;
        const std::int64_t end = n_samples * (lane + 1) / kMonteCarloLanes;
        Rng rng = make_rng(derive_seed(seed, {static_cast<std::uint64_t>(lane)}));
        for (std::int64_t s = begin; s < end; ++s) {
            const Vector x = sample_sphere(rng, d);
            if (eval(net, x.data()) <= 0.0) ++hits;
        }
    }
    return ErrorEstimate::from_counts(hits, n_samples);
}

ErrorEstimate clean_error_mc_interval(const Network& net, std::int64_t n_samples, std::uint64_t seed) {
    if (net.input_dim != 1) throw std::invalid_argument("interval Monte Carlo needs a univariate network");
    if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
    std::int64_t hits = 0;
    for (int lane = 0; lane < kMonteCarloLanes; ++lane) {
        const std::int64_t begin = n_samples * lane / kMonteCarloLanes;
        const std::int64_t end = n_samples * (lane + 1) / kMonteCarloLanes;
        Rng rng = make_rng(derive_seed(seed, {static_cast<std::uint64_t>(lane)}));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::int64_t s = begin; s < end; ++s) {
            const double x = unif(rng);
            if (eval(net, &x) <= 0.0) ++hits;
        }
    }
    return ErrorEstimate::from_counts(hits, n_samples);
}

}  // namespace overfit::serial
