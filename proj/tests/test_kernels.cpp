#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "overfit/kernels.hpp"

using namespace overfit;
using namespace testing;

TEST_CASE("batched forward agrees with single evaluations and the serial reference") {
    Rng rng = make_rng(1);
    for (int depth : {2, 3}) {
        const Network net = depth == 2 ? random_two_layer(rng, 6, 9) : random_deep(rng, 6, 5, 3);
        const Matrix xs = gaussian_matrix(rng, 40, 6);
        const Vector batch = forward_batch(net, xs);
        const Vector ref = serial::forward_batch(net, xs);
        for (int i = 0; i < 40; ++i) {
            CHECK(batch[i] == doctest::Approx(forward(net, xs.row(i).transpose())).epsilon(1e-12));
            CHECK(batch[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("constant-one network has zero clean error") {
    const Network one = Network::two_layer(Matrix::Zero(1, 7), Vector::Ones(1), Vector::Ones(1));
    const ErrorEstimate e = clean_error_mc(one, 7, 5000, 3);
    CHECK(e.point_estimate == 0.0);
    CHECK(e.std_error == 0.0);
    CHECK(e.n_samples == 5000);
    CHECK(serial::clean_error_mc(one, 7, 5000, 3).point_estimate == 0.0);
}

TEST_CASE("single bias-free neuron covers a hemisphere") {
    Rng rng = make_rng(2);
    for (int d : {2, 5, 200}) {
        const Network net = Network::two_layer(gaussian_matrix(rng, 1, d), Vector::Zero(1), Vector::Ones(1));
        const ErrorEstimate e = clean_error_mc(net, d, 40000, 17);
        CHECK(std::abs(e.point_estimate - 0.5) <= 3.0 * e.std_error);
        CHECK(e.std_error <= 0.5 / std::sqrt(40000.0) + 1e-15);
    }
}

TEST_CASE("Monte Carlo is deterministic in the seed") {
    Rng rng = make_rng(3);
    const Network net = random_two_layer(rng, 30, 4);
    const ErrorEstimate a = clean_error_mc(net, 30, 20000, 99);
    const ErrorEstimate b = clean_error_mc(net, 30, 20000, 99);
    CHECK(a.point_estimate == b.point_estimate);
    CHECK(clean_error_mc(net, 30, 20000, 100).point_estimate != doctest::Approx(-1.0));
}

TEST_CASE("serial and parallel sphere estimates coincide when no projection is used") {
    Rng rng = make_rng(4);
    for (int k = 0; k < 5; ++k) {
        const Network net = random_two_layer(rng, 4, 8);  // d <= width: full sphere draws
        CHECK(clean_error_mc(net, 4, 6000, 7 + k).point_estimate ==
              serial::clean_error_mc(net, 4, 6000, 7 + k).point_estimate);
    }
    const Network deep = random_deep(rng, 3, 4, 3);
    CHECK(clean_error_mc(deep, 3, 5000, 1).point_estimate == serial::clean_error_mc(deep, 3, 5000, 1).point_estimate);
}

TEST_CASE("projected sampler agrees statistically with full sphere draws") {
    Rng rng = make_rng(5);
    for (int k = 0; k < 6; ++k) {
        const int d = 20 + 10 * k;
        const Network net = random_two_layer(rng, d, 3);
        const ErrorEstimate fast = clean_error_mc(net, d, 100000, 11);
        const ErrorEstimate ref = serial::clean_error_mc(net, d, 100000, 12);
        const double se = std::hypot(fast.std_error, ref.std_error);
        CHECK(std::abs(fast.point_estimate - ref.point_estimate) <= 4.0 * se + 1e-12);
    }
}

TEST_CASE("interval estimates are identical in both implementations") {
    Rng rng = make_rng(6);
    for (int k = 0; k < 5; ++k) {
        const Network net = random_two_layer(rng, 1, 6);
        CHECK(clean_error_mc_interval(net, 30000, k).point_estimate ==
              serial::clean_error_mc_interval(net, 30000, k).point_estimate);
    }
}

TEST_CASE("sphere projection event probabilities") {
    Matrix dirs = Matrix::Zero(2, 10);
    dirs(0, 0) = 1.0;
    dirs(1, 1) = 1.0;
    const ErrorEstimate q = sphere_projection_mc(dirs, 100000, 3, [](const Eigen::Ref<const Vector>& z) {
        return z[0] < 0.0 && z[1] < 0.0;
    });
    CHECK(std::abs(q.point_estimate - 0.25) <= 4.0 * q.std_error);
    const ErrorEstimate none =
        sphere_projection_mc(Matrix(0, 10), 1000, 3, [](const Eigen::Ref<const Vector>&) { return true; });
    CHECK(none.point_estimate == 1.0);
}

TEST_CASE("argument checks") {
    Rng rng = make_rng(7);
    const Network net = random_two_layer(rng, 3, 2);
    CHECK_THROWS_AS(clean_error_mc(net, 4, 10, 0), std::invalid_argument);
    CHECK_THROWS_AS(clean_error_mc(net, 3, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(clean_error_mc_interval(net, 10, 0), std::invalid_argument);
    CHECK_THROWS_AS(forward_batch(net, Matrix::Zero(2, 4)), std::invalid_argument);
}
