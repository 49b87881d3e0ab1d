#include "overfit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "overfit/rng.hpp"

namespace overfit {

ErrorEstimate ErrorEstimate::from_counts(std::int64_t hits, std::int64_t n) {
    ErrorEstimate e;
    e.n_samples = n;
    if (n == 0) return e;
    e.point_estimate = static_cast<double>(hits) / static_cast<double>(n);
    e.std_error = std::sqrt(e.point_estimate * (1.0 - e.point_estimate) / static_cast<double>(n));
    return e;
}

Matrix pre_activations(const Network& net, const Matrix& inputs) {
    if (net.depth() != 2) throw std::invalid_argument("pre_activations expects a depth-2 network");
    if (inputs.cols() != net.input_dim) throw std::invalid_argument("input dimension mismatch");
    Matrix pre = net.hidden_weights() * inputs.transpose();
    pre.colwise() += net.biases();
    return pre;
}

Vector forward_batch(const Network& net, const Matrix& inputs) {
    if (inputs.cols() != net.input_dim) throw std::invalid_argument("input dimension mismatch");
    constexpr Eigen::Index kBlock = 512;
    const Eigen::Index m = inputs.rows();
    const Eigen::Index blocks = (m + kBlock - 1) / kBlock;
    Vector out(m);
#pragma omp parallel for schedule(static)
    for (Eigen::Index blk = 0; blk < blocks; ++blk) {
        const Eigen::Index start = blk * kBlock, len = std::min(kBlock, m - start);
        Matrix h = inputs.middleRows(start, len).transpose();
        for (const auto& layer : net.layers) {
            Matrix z(layer.weights.rows(), len);
            if (layer.weights.cols() <= 8) z.noalias() = layer.weights.lazyProduct(h);
            else z.noalias() = layer.weights * h;
            h = (z.colwise() + layer.biases).cwiseMax(0.0);
        }
        out.segment(start, len) = h.transpose() * net.output_weights;
    }
    return out;
}

namespace {

constexpr int kChunk = 256;

// Draws W x for x ~ Unif(S^{d-1}). When d exceeds the number of rows k, only
// the k Gaussian coordinates along an orthonormal basis of row(W) are drawn;
// the remaining squared norm is chi-square with d - k degrees of freedom.
class ProjectionSampler {
public:
    ProjectionSampler(const Matrix& directions, int d) : directions_(directions), d_(d) {
        if (directions.cols() != d) throw std::invalid_argument("direction dimension mismatch");
        const auto k = directions.rows();
        projected_ = d > k && k > 0;
        if (projected_) {
            Eigen::HouseholderQR<Matrix> qr(directions.transpose());
            const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
            r_transpose_ = r.transpose();
        }
    }

    Matrix draw(Rng& rng, int count) const {
        std::normal_distribution<double> gauss(0.0, 1.0);
        const auto k = directions_.rows();
        if (projected_) {
            std::chi_squared_distribution<double> tail(static_cast<double>(d_ - k));
            Matrix z(k, count);
            Vector inv_norm(count);
            for (int s = 0; s < count; ++s) {
                for (Eigen::Index r = 0; r < k; ++r) z(r, s) = gauss(rng);
                inv_norm[s] = 1.0 / std::sqrt(z.col(s).squaredNorm() + tail(rng));
            }
            Matrix proj = r_transpose_ * z;
            return proj * inv_norm.asDiagonal();
        }
        Matrix xs(d_, count);
        for (int s = 0; s < count; ++s) xs.col(s) = sample_sphere(rng, d_);
        return directions_ * xs;
    }

private:
    const Matrix& directions_;
    int d_;
    bool projected_ = false;
    Matrix r_transpose_;
};

template <typename CountChunk>
ErrorEstimate run_lanes(std::int64_t n_samples, std::uint64_t seed, CountChunk&& count_chunk) {
    if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
    std::vector<std::int64_t> hits(kMonteCarloLanes, 0);
#pragma omp parallel for schedule(dynamic, 1)
    for (int lane = 0; lane < kMonteCarloLanes; ++lane) {
        const std::int64_t begin = n_samples * lane / kMonteCarloLanes;
        const std::int64_t end = n_samples * (lane + 1) / kMonteCarloLanes;
        Rng rng = make_rng(derive_seed(seed, {static_cast<std::uint64_t>(lane)}));
        std::int64_t local = 0;
        for (std::int64_t s = begin; s < end; s += kChunk) {
            const int count = static_cast<int>(std::min<std::int64_t>(kChunk, end - s));
            local += count_chunk(rng, count);
        }
        hits[lane] = local;
    }
    std::int64_t total = 0;
    for (auto h : hits) total += h;
    return ErrorEstimate::from_counts(total, n_samples);
}

}  // namespace

ErrorEstimate clean_error_mc(const Network& net, int d, std::int64_t n_samples, std::uint64_t seed) {
    if (d < 2) throw std::invalid_argument("sphere Monte Carlo needs d >= 2");
    if (d != net.input_dim) throw std::invalid_argument("network input dimension differs from d");
    if (net.depth() == 2) {
        const ProjectionSampler sampler(net.hidden_weights(), d);
        return run_lanes(n_samples, seed, [&](Rng& rng, int count) {
            Matrix pre = sampler.draw(rng, count);
            pre.colwise() += net.biases();
            const Vector out = pre.cwiseMax(0.0).transpose() * net.output_weights;
            return static_cast<std::int64_t>((out.array() <= 0.0).count());
        });
    }
    Network tail = net;
    const Matrix first = net.layers.front().weights;
    const Vector first_bias = net.layers.front().biases;
    tail.layers.erase(tail.layers.begin());
    const ProjectionSampler sampler(first, d);
    return run_lanes(n_samples, seed, [&](Rng& rng, int count) {
        Matrix h = sampler.draw(rng, count);
        h.colwise() += first_bias;
        h = h.cwiseMax(0.0);
        for (const auto& layer : tail.layers) {
            Matrix z = layer.weights * h;
            z.colwise() += layer.biases;
            h = z.cwiseMax(0.0);
        }
        const Vector out = h.transpose() * net.output_weights;
        return static_cast<std::int64_t>((out.array() <= 0.0).count());
    });
}

ErrorEstimate clean_error_mc_interval(const Network& net, std::int64_t n_samples, std::uint64_t seed) {
    if (net.input_dim != 1) throw std::invalid_argument("interval Monte Carlo needs a univariate network");
    return run_lanes(n_samples, seed, [&](Rng& rng, int count) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        Matrix xs(count, 1);
        for (int s = 0; s < count; ++s) xs(s, 0) = unif(rng);
        const Vector out = forward_batch(net, xs);
        return static_cast<std::int64_t>((out.array() <= 0.0).count());
    });
}

ErrorEstimate sphere_projection_mc(const Matrix& directions, std::int64_t n_samples, std::uint64_t seed,
                                   const ProjectionEvent& event) {
    const int d = static_cast<int>(directions.cols());
    if (d < 2) throw std::invalid_argument("sphere Monte Carlo needs d >= 2");
    if (directions.rows() == 0) {
        // No directions: the event sees an empty vector for every sample.
        const bool hit = event(Vector(0));
        return ErrorEstimate::from_counts(hit ? n_samples : 0, n_samples);
    }
    const ProjectionSampler sampler(directions, d);
    return run_lanes(n_samples, seed, [&](Rng& rng, int count) {
        const Matrix proj = sampler.draw(rng, count);
        std::int64_t hits = 0;
        for (int s = 0; s < count; ++s)
            if (event(proj.col(s))) ++hits;
        return hits;
    });
}

}  // namespace overfit
