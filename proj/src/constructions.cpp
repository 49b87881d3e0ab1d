#include "overfit/constructions.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace overfit {

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

ConstructionResult build_feasible_highdim(const Dataset& ds, int n) {
    ds.validate();
    if (ds.d() < 2) throw std::invalid_argument("feasible construction needs d >= 2");
    if (n < 2 || n % 2 != 0) throw std::invalid_argument("feasible construction needs an even width n >= 2");
    const std::vector<int> neg = ds.negative_indices();
    if (neg.empty()) throw std::invalid_argument("feasible construction needs at least one negative label");

    const double k = static_cast<double>(neg.size());
    const double scale = std::sqrt(4.0 / (static_cast<double>(n) * std::sqrt(k)));
    const double out = 2.0 * std::sqrt(std::sqrt(k) / static_cast<double>(n));
    Vector direction = Vector::Zero(ds.d());
    for (const int i : neg) direction += ds.inputs.row(i).transpose();

    const int half = n / 2;
    Matrix w(n, ds.d());
    Vector b = Vector::Zero(n);
    Vector v(n);
    for (int j = 0; j < n; ++j) {
        const bool first = j < half;
        w.row(j) = (first ? -scale : scale) * direction.transpose();
        b[j] = first ? scale : 0.0;
        v[j] = first ? out : -out;
    }

    ConstructionResult res;
    res.net = Network::two_layer(std::move(w), std::move(b), std::move(v));
    res.per_sample_margins = to_std(margins(res.net, ds));
    res.norm_sq = param_norm_sq(res.net);
    res.claimed_bound = 9.0 * std::sqrt(k);
    res.bound_satisfied = res.norm_sq <= res.claimed_bound * (1.0 + 1e-9);
    return res;
}

OrthogonalKktResult build_orthogonal_kkt(const Dataset& ds, std::int64_t mc_samples, std::uint64_t seed) {
    ds.validate();
    if (ds.d() < 2) throw std::invalid_argument("orthogonal construction needs d >= 2");
    const Matrix gram = ds.inputs * ds.inputs.transpose();
    for (int i = 0; i < ds.m(); ++i) {
        if (std::abs(gram(i, i) - 1.0) > 1e-10)
            throw std::invalid_argument("input " + std::to_string(i) + " is not unit norm");
        for (int k = i + 1; k < ds.m(); ++k)
            if (std::abs(gram(i, k)) > 1e-10)
                throw std::invalid_argument("inputs " + std::to_string(i) + " and " + std::to_string(k) +
                                            " are not orthogonal");
    }
    const std::vector<int> neg = ds.negative_indices();
    const std::vector<int> pos = ds.positive_indices();
    if (neg.empty()) throw std::invalid_argument("orthogonal construction needs at least one negative label");

    const int width = static_cast<int>(neg.size()) + (pos.empty() ? 0 : 1);
    Matrix w = Matrix::Zero(width, ds.d());
    Vector v(width);
    for (std::size_t r = 0; r < neg.size(); ++r) {
        w.row(static_cast<Eigen::Index>(r)) = ds.inputs.row(neg[r]);
        v[static_cast<Eigen::Index>(r)] = -1.0;
    }
    if (!pos.empty()) {
        // w = c * sum x_i and v = 1/c with |v| = ||w||, i.e. c^4 = 1/|I+|.
        const double c = std::pow(static_cast<double>(pos.size()), -0.25);
        for (const int i : pos) w.row(width - 1) += c * ds.inputs.row(i);
        v[width - 1] = 1.0 / c;
    }

    OrthogonalKktResult res;
    res.net = Network::two_layer(std::move(w), Vector::Zero(width), std::move(v), true, true);
    res.per_sample_margins = to_std(margins(res.net, ds));
    res.kkt = recover_duals(res.net, ds, kConstructionMarginTol);
    res.mc_error = clean_error_mc(res.net, ds.d(), mc_samples, seed);
    res.lower_bound = 0.5 - std::ldexp(1.0, -static_cast<int>(neg.size()));
    return res;
}

ErrorEstimate negative_orthant_mass(const Network& net, std::int64_t n_samples, std::uint64_t seed) {
    if (net.depth() != 2) throw std::invalid_argument("negative orthant mass needs a depth-2 network");
    if (net.biases().cwiseAbs().maxCoeff() != 0.0)
        throw std::invalid_argument("negative orthant mass needs a bias-free network");
    std::vector<int> positive;
    for (int j = 0; j < net.width(); ++j)
        if (net.output_weights[j] >= 0.0) positive.push_back(j);
    const Matrix directions = net.hidden_weights()(positive, Eigen::all);
    if (positive.empty()) return ErrorEstimate::from_counts(n_samples, n_samples);
    return sphere_projection_mc(directions, n_samples, seed,
                                [](const Eigen::Ref<const Vector>& z) { return (z.array() < 0.0).all(); });
}

json to_json(const ConstructionResult& res) {
    return {{"network", to_json(res.net)},
            {"per_sample_margins", res.per_sample_margins},
            {"norm_sq", res.norm_sq},
            {"claimed_bound", res.claimed_bound},
            {"bound_satisfied", res.bound_satisfied},
            {"bias_sum", bias_sum(res.net)}};
}

json to_json(const OrthogonalKktResult& res) {
    return {{"network", to_json(res.net)},
            {"per_sample_margins", res.per_sample_margins},
            {"kkt", to_json(res.kkt)},
            {"mc_error", {{"point_estimate", res.mc_error.point_estimate},
                          {"std_error", res.mc_error.std_error},
                          {"n_samples", res.mc_error.n_samples}}},
            {"lower_bound", res.lower_bound}};
}

}  // namespace overfit
