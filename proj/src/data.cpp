#include "overfit/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "overfit/io.hpp"
#include "overfit/rng.hpp"

namespace overfit {

std::string to_string(Distribution dist) {
    return dist == Distribution::Interval1d ? "interval_1d" : "sphere";
}

Distribution distribution_from_string(const std::string& s) {
    if (s == "interval_1d") return Distribution::Interval1d;
    if (s == "sphere") return Distribution::Sphere;
    throw std::invalid_argument("unknown distribution '" + s + "'");
}

std::vector<int> Dataset::positive_indices() const {
    std::vector<int> out;
    for (int i = 0; i < m(); ++i)
        if (labels[i] > 0) out.push_back(i);
    return out;
}

std::vector<int> Dataset::negative_indices() const {
    std::vector<int> out;
    for (int i = 0; i < m(); ++i)
        if (labels[i] < 0) out.push_back(i);
    return out;
}

void Dataset::validate() const {
    if (labels.size() != inputs.rows()) throw std::invalid_argument("label count differs from sample count");
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        if (labels[i] != 1.0 && labels[i] != -1.0) throw std::invalid_argument("labels must be +1 or -1");
    if (!inputs.allFinite()) throw std::invalid_argument("inputs must be finite");
    if (!(p >= 0.0 && p < 0.5)) throw std::invalid_argument("noise level must lie in [0, 0.5)");
}

Dataset sample_dataset(int d, int m, double p, std::uint64_t seed) {
    if (d < 1) throw std::invalid_argument("d must be >= 1");
    if (m < 1) throw std::invalid_argument("m must be >= 1");
    if (!(p >= 0.0 && p < 0.5)) throw std::invalid_argument("noise level p must lie in [0, 0.5)");

    Dataset ds;
    ds.p = p;
    ds.seed = seed;
    ds.distribution = d == 1 ? Distribution::Interval1d : Distribution::Sphere;
    ds.inputs.resize(m, d);
    ds.labels.resize(m);

    Rng input_rng = make_rng(derive_seed(seed, {1}));
    if (d == 1) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (int i = 0; i < m; ++i) ds.inputs(i, 0) = unif(input_rng);
    } else {
        for (int i = 0; i < m; ++i) ds.inputs.row(i) = sample_sphere(input_rng, d).transpose();
    }

    // Labels come from their own stream so they are independent of the inputs.
    Rng label_rng = make_rng(derive_seed(seed, {2}));
    std::bernoulli_distribution flip(p);
    for (int i = 0; i < m; ++i) ds.labels[i] = flip(label_rng) ? -1.0 : 1.0;
    return ds;
}

double gram_spectral_norm(const Eigen::MatrixXd& inputs) {
    const Eigen::MatrixXd gram = inputs * inputs.transpose();
    if (gram.rows() == 0) return 0.0;
    Rng rng = make_rng(0x5eed);
    std::normal_distribution<double> gauss;
    Eigen::VectorXd q(gram.rows());
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] = std::abs(gauss(rng)) + 1e-3;
    q.normalize();
    double estimate = 0.0;
    for (int it = 0; it < 200; ++it) {
        Eigen::VectorXd z = gram * q;
        const double next = q.dot(z);
        const double nz = z.norm();
        if (nz == 0.0) return 0.0;
        q = z / nz;
        const bool done = it > 0 && std::abs(next - estimate) <= 1e-8 * std::abs(next);
        estimate = next;
        if (done) break;
    }
    return estimate;
}

DataPropertyReport check_data_properties(const Dataset& ds, double delta, double gram_bound) {
    if (ds.d() < 2) throw std::invalid_argument("data property checks need sphere data (d >= 2)");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
    DataPropertyReport rep;
    const int m = ds.m();
    const Eigen::MatrixXd gram = ds.inputs * ds.inputs.transpose();
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) rep.max_abs_inner = std::max(rep.max_abs_inner, std::abs(gram(i, j)));
    rep.inner_threshold = std::sqrt(2.0 * std::log(3.0 * m * m / delta) / ds.d());
    rep.inner_ok = rep.max_abs_inner <= rep.inner_threshold;

    rep.gram_spectral_norm = gram_spectral_norm(ds.inputs);
    rep.gram_bound = gram_bound;
    rep.gram_ok = rep.gram_spectral_norm <= gram_bound;

    rep.neg_count = static_cast<int>(ds.negative_indices().size());
    rep.neg_threshold = 1.5 * ds.p * m;
    rep.neg_ok = rep.neg_count <= rep.neg_threshold;
    return rep;
}

SpacingStats spacing_stats(std::vector<double> points) {
    SpacingStats st;
    std::sort(points.begin(), points.end());
    const auto m = points.size();
    const double small = 1.0 / (10.0 * static_cast<double>(m + 1));
    st.gaps.reserve(m + 1);
    double prev = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        st.gaps.push_back(points[i] - prev);
        if (i > 0) {
            const double g = points[i] - points[i - 1];
            st.max_interior_gap = std::max(st.max_interior_gap, g);
            if (g < small) ++st.small_gap_count;
            if (g == 0.0) st.collision_flag = true;
        }
        prev = points[i];
    }
    st.gaps.push_back(1.0 - prev);
    for (double g : st.gaps) {
        st.max_gap = std::max(st.max_gap, g);
        if (g < small) ++st.small_gap_count_all;
    }
    st.ordered_gaps = st.gaps;
    std::sort(st.ordered_gaps.begin(), st.ordered_gaps.end());
    return st;
}

SpacingStats spacing_stats(const Dataset& ds) {
    if (ds.d() != 1) throw std::invalid_argument("spacing statistics need d == 1");
    return spacing_stats(std::vector<double>(ds.inputs.data(), ds.inputs.data() + ds.m()));
}

void save_dataset(const Dataset& ds, const std::string& path) { write_json_file(to_json(ds), path); }

Dataset load_dataset(const std::string& path) { return dataset_from_json(read_json_file(path)); }

}  // namespace overfit
