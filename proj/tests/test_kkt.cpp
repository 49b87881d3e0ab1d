#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "overfit/constructions.hpp"
#include "overfit/kernels.hpp"
#include "overfit/kkt.hpp"

using namespace overfit;
using namespace testing;

namespace {

// A random network together with labels it classifies with a margin.
struct Labelled {
    Network net;
    Dataset ds;
};

Labelled random_interpolating(Rng& rng, int d, int m, int n, std::uint64_t seed) {
    for (;;) {
        Labelled out{random_two_layer(rng, d, n), sample_dataset(d, m, 0.0, seed++)};
        const Vector f = forward_batch(out.net, out.ds.inputs);
        if (f.cwiseAbs().minCoeff() < 1e-3) continue;
        out.ds.labels = f.array().sign().matrix();
        return out;
    }
}

double residual_from_duals(const Network& net, const Dataset& ds, const std::vector<double>& duals) {
    const GradientOperator op(net, ds);
    const Vector lam = Eigen::Map<const Vector>(duals.data(), static_cast<Eigen::Index>(duals.size()));
    const Vector theta = flatten(net, true);
    return (theta - flatten(op.apply(lam), true)).norm() / theta.norm();
}

}  // namespace

TEST_CASE("gradient operator agrees with per-sample gradients") {
    Rng rng = make_rng(1);
    for (const bool trainable : {true, false}) {
        const Network net = random_two_layer(rng, 5, 6, trainable);
        const Dataset ds = sample_dataset(5, 7, 0.3, 2);
        const GradientOperator op(net, ds);
        Matrix cols(static_cast<Eigen::Index>(net.num_params(true)), 7);
        for (int i = 0; i < 7; ++i)
            cols.col(i) = ds.labels[i] * flatten(forward_grad(net, ds.inputs.row(i).transpose()), true);

        const Vector u = gaussian_vector(rng, 7);
        CHECK((flatten(op.apply(u), true) - cols * u).cwiseAbs().maxCoeff() <= 1e-12);
        const Network r = random_two_layer(rng, 5, 6, trainable);
        CHECK((op.apply_transpose(r) - cols.transpose() * flatten(r, true)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((op.gram() - cols.transpose() * cols).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("orthogonal construction has the balanced duals") {
    // |I-| = 1, m = 3: lambda = 1 on the negative, 1/sqrt(2) on each positive.
    const OrthogonalKktResult small = build_orthogonal_kkt(orthonormal_dataset(4, {1, -1, 1}), 1000, 1);
    CHECK(small.kkt.stationarity_rel_residual <= 1e-10);
    CHECK(small.kkt.duals[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(small.kkt.duals[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(small.kkt.duals[2] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));

    const OrthogonalKktResult res = build_orthogonal_kkt(orthonormal_dataset(8, {1, -1, 1, 1, -1, 1}), 1000, 1);
    CHECK(res.kkt.stationarity_rel_residual <= 1e-10);
    CHECK(res.kkt.support_set.size() == 6u);
    CHECK(res.kkt.comp_slack_violation <= 1e-12);
    for (int i : {1, 4}) CHECK(res.kkt.duals[static_cast<std::size_t>(i)] == doctest::Approx(1.0).epsilon(1e-9));
    for (int i : {0, 2, 3, 5}) CHECK(res.kkt.duals[static_cast<std::size_t>(i)] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("planted duals are recovered") {
    Rng rng = make_rng(2);
    std::uniform_int_distribution<int> md(2, 20), dd(1, 10), nd(2, 8);
    int recovered = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int m = md(rng), d = dd(rng), n = nd(rng);
        const Network net = random_two_layer(rng, d, n);
        const Dataset ds = sample_dataset(d, m, 0.3, 500 + trial);
        const GradientOperator op(net, ds);
        const Eigen::SelfAdjointEigenSolver<Matrix> es(op.gram());
        if (es.eigenvalues().minCoeff() <= 1e-8 * std::max(1.0, es.eigenvalues().maxCoeff())) continue;

        Vector lam = gaussian_vector(rng, m).cwiseAbs();
        for (int i = 0; i < m; ++i)
            if (i % 3 == 0) lam[i] = 0.0;
        const Network target = op.apply(lam);
        if (flatten(target, true).norm() == 0.0) continue;
        std::vector<int> support(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) support[static_cast<std::size_t>(i)] = i;
        const DualSolve sol = solve_stationarity_duals(op, target, support);
        CHECK(sol.rel_residual <= 1e-8);
        CHECK((sol.duals - lam).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, lam.maxCoeff()));
        CHECK(sol.duals.minCoeff() >= 0.0);
        ++recovered;
    }
    CHECK(recovered >= 30);
}

TEST_CASE("recovered duals reproduce the reported residual and respect the support") {
    Rng rng = make_rng(3);
    for (int k = 0; k < 20; ++k) {
        const Labelled L = random_interpolating(rng, 4, 12, 6, 100 * k);
        const Network unit = rescale_to_unit_margin(L.net, L.ds);
        for (const double tol : {1e-3, 0.5, 5.0}) {
            const KktReport rep = recover_duals(unit, L.ds, tol);
            CHECK(std::abs(residual_from_duals(unit, L.ds, rep.duals) - rep.stationarity_rel_residual) <= 1e-12);
            CHECK(rep.dual_min >= 0.0);
            const Vector marg = margins(unit, L.ds);
            for (int i = 0; i < L.ds.m(); ++i) {
                const bool in_support =
                    std::find(rep.support_set.begin(), rep.support_set.end(), i) != rep.support_set.end();
                CHECK(in_support == (marg[i] <= 1.0 + tol));
                if (!in_support) CHECK(rep.duals[static_cast<std::size_t>(i)] == 0.0);
            }
            CHECK(rep.iterations <= rep.iteration_budget);
        }
    }
}

TEST_CASE("a random interpolating network is far from KKT") {
    Rng rng = make_rng(4);
    for (int k = 0; k < 10; ++k) {
        const Labelled L = random_interpolating(rng, 6, 10, 8, 40 * k);
        const KktReport rep = recover_duals(rescale_to_unit_margin(L.net, L.ds), L.ds);
        CHECK(rep.stationarity_rel_residual > 0.1);
    }
}

TEST_CASE("reports are invariant to the scale of the network") {
    Rng rng = make_rng(5);
    const OrthogonalKktResult res = build_orthogonal_kkt(orthonormal_dataset(8, {1, -1, 1, 1, -1, 1}), 1000, 1);
    const Dataset ortho = orthonormal_dataset(8, {1, -1, 1, 1, -1, 1});
    const KktReport base = recover_duals(res.net, ortho, kConstructionMarginTol);
    for (const double c : {0.3, 2.0, 17.0}) {
        const KktReport rep = recover_duals(rescale_to_unit_margin(scaled(res.net, c), ortho), ortho, 1e-9);
        for (std::size_t i = 0; i < base.duals.size(); ++i) CHECK(std::abs(rep.duals[i] - base.duals[i]) <= 1e-10);
        CHECK(std::abs(rep.stationarity_rel_residual - base.stationarity_rel_residual) <= 1e-10);
    }

    for (int k = 0; k < 5; ++k) {
        const Labelled L = random_interpolating(rng, 3, 8, 5, 70 * k);
        const KktReport ref = recover_duals(rescale_to_unit_margin(L.net, L.ds), L.ds, 0.5);
        for (const double c : {0.25, 4.0}) {
            const KktReport rep = recover_duals(rescale_to_unit_margin(scaled(L.net, c), L.ds), L.ds, 0.5);
            REQUIRE(rep.support_set == ref.support_set);
            for (std::size_t i = 0; i < ref.duals.size(); ++i)
                CHECK(std::abs(rep.duals[i] - ref.duals[i]) <= 1e-10 * std::max(1.0, ref.duals[i]));
            CHECK(std::abs(rep.stationarity_rel_residual - ref.stationarity_rel_residual) <= 1e-10);
        }
    }
}

TEST_CASE("recover_duals rejects unusable input") {
    const Network one = Network::two_layer(Matrix::Zero(2, 3), Vector::Ones(2), Vector{{0.5, 0.5}});
    Dataset ds = orthonormal_dataset(3, {1, -1});
    CHECK_THROWS_AS(recover_duals(one, ds), std::invalid_argument);
    ds.labels[1] = 1;
    CHECK_THROWS_AS(recover_duals(scaled(one, 0.5), ds), std::invalid_argument);  // margin 1/4
    Rng rng = make_rng(6);
    CHECK_THROWS_AS(recover_duals(random_deep(rng, 3, 4, 3), ds), std::invalid_argument);
}

TEST_CASE("certification along a training run") {
    const Dataset ortho = orthonormal_dataset(8, {1, -1, 1, 1, -1, 1});
    const Network kkt_net = build_orthogonal_kkt(ortho, 1000, 1).net;
    std::vector<Checkpoint> cps;
    for (int e = 0; e < 4; ++e) cps.push_back({100 * e, scaled(kkt_net, 1.0 + e)});
    for (const auto& r : kkt_distance_along_training(cps, ortho, 1e-9)) CHECK(r.report.stationarity_rel_residual <= 1e-10);

    const Network zero = Network::two_layer(Matrix::Zero(2, 8), Vector::Zero(2), Vector::Zero(2));
    std::vector<Checkpoint> mixed{{0, zero}, {10, zero}, {20, kkt_net}};
    const auto series = kkt_distance_along_training(mixed, ortho, 1e-9);
    REQUIRE(series.size() == 1u);
    CHECK(series[0].epoch == 20);
    CHECK(kkt_distance_along_training({{0, zero}}, ortho).empty());
}

TEST_CASE("bias positivity statistics") {
    const Matrix w = Matrix::Ones(4, 2);
    const Vector v{{1.0, 1.0, -1.0, -1.0}};
    const BiasPositivity zero = bias_positivity_check(Network::two_layer(w, Vector::Zero(4), v, false));
    CHECK(zero.all_bias_nonneg);
    CHECK(zero.bias_gap == 0.0);
    const BiasPositivity gap = bias_positivity_check(Network::two_layer(w, Vector{{1.0, 1.0, 0.2, 0.1}}, v, false));
    CHECK(gap.all_bias_nonneg);
    CHECK(gap.bias_gap == doctest::Approx(1.7));
    CHECK_FALSE(bias_positivity_check(Network::two_layer(w, Vector{{1.0, -1.0, 0.2, 0.1}}, v, false)).all_bias_nonneg);
    CHECK_THROWS_AS(bias_positivity_check(Network::two_layer(w, Vector::Zero(4), v, true)), std::invalid_argument);
}
