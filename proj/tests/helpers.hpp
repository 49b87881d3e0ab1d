#pragma once

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "overfit/data.hpp"
#include "overfit/network.hpp"
#include "overfit/rng.hpp"

namespace testing {

using overfit::Dataset;
using overfit::Matrix;
using overfit::Network;
using overfit::Vector;

inline Matrix gaussian_matrix(overfit::Rng& rng, int rows, int cols, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Matrix a(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) a(r, c) = g(rng);
    return a;
}

inline Vector gaussian_vector(overfit::Rng& rng, int n, double scale = 1.0) {
    return gaussian_matrix(rng, n, 1, scale).col(0);
}

inline Network random_two_layer(overfit::Rng& rng, int d, int n, bool trainable = true) {
    Vector v = gaussian_vector(rng, n);
    if (!trainable)
        for (int j = 0; j < n; ++j) v[j] = j < n / 2 ? 1.0 : -1.0;
    return Network::two_layer(gaussian_matrix(rng, n, d), gaussian_vector(rng, n), v, trainable);
}

inline Network random_deep(overfit::Rng& rng, int d, int n, int depth) {
    Network net;
    net.input_dim = d;
    int fan_in = d;
    for (int l = 0; l + 1 < depth; ++l) {
        net.layers.push_back({gaussian_matrix(rng, n, fan_in, 1.0 / std::sqrt(fan_in)), gaussian_vector(rng, n, 0.3)});
        fan_in = n;
    }
    net.output_weights = gaussian_vector(rng, n);
    return net;
}

/// Rows are the first m standard basis vectors of R^d.
inline Dataset orthonormal_dataset(int d, const std::vector<double>& labels) {
    Dataset ds;
    const int m = static_cast<int>(labels.size());
    ds.inputs = Matrix::Zero(m, d);
    ds.labels.resize(m);
    for (int i = 0; i < m; ++i) {
        ds.inputs(i, i) = 1.0;
        ds.labels[i] = labels[static_cast<std::size_t>(i)];
    }
    ds.distribution = overfit::Distribution::Sphere;
    return ds;
}

inline Dataset interval_dataset(const std::vector<double>& xs, const std::vector<double>& labels) {
    Dataset ds;
    const int m = static_cast<int>(xs.size());
    ds.inputs.resize(m, 1);
    ds.labels.resize(m);
    for (int i = 0; i < m; ++i) {
        ds.inputs(i, 0) = xs[static_cast<std::size_t>(i)];
        ds.labels[i] = labels[static_cast<std::size_t>(i)];
    }
    ds.distribution = overfit::Distribution::Interval1d;
    return ds;
}

/// Univariate net from (v, w, b) triples.
inline Network univariate(const std::vector<std::array<double, 3>>& neurons) {
    const int n = static_cast<int>(neurons.size());
    Matrix w(n, 1);
    Vector b(n), v(n);
    for (int j = 0; j < n; ++j) {
        v[j] = neurons[static_cast<std::size_t>(j)][0];
        w(j, 0) = neurons[static_cast<std::size_t>(j)][1];
        b[j] = neurons[static_cast<std::size_t>(j)][2];
    }
    return Network::two_layer(w, b, v);
}

/// Central finite differences of N(x) in every flattened parameter.
inline Vector fd_gradient(const Network& net, const Vector& x, double h = 1e-5) {
    Vector theta = overfit::flatten(net);
    Vector g(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        Vector tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        g[k] = (overfit::forward(overfit::unflatten(net, tp), x) - overfit::forward(overfit::unflatten(net, tm), x)) /
               (2.0 * h);
    }
    return g;
}

/// Smallest |pre-activation| over all layers at x.
inline double min_abs_preactivation(const Network& net, const Vector& x) {
    double best = INFINITY;
    Vector a = x;
    for (const auto& l : net.layers) {
        const Vector z = l.weights * a + l.biases;
        best = std::min(best, z.cwiseAbs().minCoeff());
        a = z.cwiseMax(0.0);
    }
    return best;
}

}  // namespace testing
