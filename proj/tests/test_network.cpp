#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "overfit/io.hpp"
#include "overfit/kernels.hpp"
#include "overfit/network.hpp"

using namespace overfit;
using namespace testing;

namespace {

Network single(double v, const Vector& w, double b) {
    return Network::two_layer(w.transpose(), Vector::Constant(1, b), Vector::Constant(1, v));
}

Vector e(int d, int k) {
    Vector x = Vector::Zero(d);
    x[k] = 1.0;
    return x;
}

}  // namespace

TEST_CASE("forward on hand-built networks") {
    CHECK(forward(single(1.0, e(3, 0), 0.0), e(3, 0)) == 1.0);

    Matrix w(2, 3);
    w << 1, 0, 0, 1, 0, 0;
    const Network cancel = Network::two_layer(w, Vector::Zero(2), Vector{{1.0, -1.0}});
    Rng rng = make_rng(1);
    for (int k = 0; k < 20; ++k) CHECK(forward(cancel, gaussian_vector(rng, 3)) == 0.0);

    CHECK_THROWS_AS(forward(cancel, Vector::Zero(2)), std::invalid_argument);
}

TEST_CASE("deep forward composes layers") {
    Network net;
    net.input_dim = 2;
    Matrix w1(2, 2);
    w1 << 1, 0, 0, -1;
    Matrix w2(1, 2);
    w2 << 1, 1;
    net.layers.push_back({w1, Vector{{0.0, 1.0}}});
    net.layers.push_back({w2, Vector{{-0.5}}});
    net.output_weights = Vector{{2.0}};
    // layer 1: relu(3)=3, relu(-(-2)+1)=3; layer 2: relu(6-0.5)=5.5
    CHECK(forward(net, Vector{{3.0, -2.0}}) == doctest::Approx(11.0));
}

TEST_CASE("gradient blocks follow the ReLU pattern") {
    const Network net = single(2.5, Vector{{1.0, -1.0}}, 1.0);
    const Network g = forward_grad(net, Vector::Zero(2));
    CHECK(g.biases()[0] == 2.5);
    CHECK(g.output_weights[0] == 1.0);
    CHECK(g.hidden_weights().isZero());

    const Network off = single(2.5, Vector{{1.0, 0.0}}, -1.0);
    const Network go = forward_grad(off, Vector{{0.5, 0.0}});
    CHECK(flatten(go).isZero());

    const Network kink = single(1.5, Vector{{1.0, 0.0}}, -0.5);
    CHECK(forward_grad(kink, Vector{{0.5, 0.0}}).biases()[0] == 0.0);
    CHECK(forward_grad(kink, Vector{{0.5, 0.0}}, 1.0).biases()[0] == 1.5);
    CHECK(forward_grad(kink, Vector{{0.5, 0.0}}, 0.5).biases()[0] == 0.75);
}

TEST_CASE("analytic gradient matches central differences") {
    Rng rng = make_rng(7);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const int depth = trial % 3 == 2 ? 3 : 2;
        const Network net = depth == 2 ? random_two_layer(rng, 5, 4) : random_deep(rng, 4, 5, 3);
        const Vector x = gaussian_vector(rng, net.input_dim);
        if (min_abs_preactivation(net, x) < 1e-3) continue;  // rejection away from kinks
        const Vector analytic = flatten(forward_grad(net, x));
        const Vector numeric = fd_gradient(net, x);
        const double rel = (analytic - numeric).cwiseAbs().maxCoeff() / std::max(1.0, numeric.cwiseAbs().maxCoeff());
        CHECK(rel <= 1e-6);
        ++checked;
    }
    CHECK(checked >= 30);
}

TEST_CASE("bias-free gradient has no bias block") {
    Rng rng = make_rng(3);
    Network net = random_two_layer(rng, 4, 6);
    net.biases().setZero();
    net.bias_free = true;
    const Network g = forward_grad(net, gaussian_vector(rng, 4));
    CHECK(g.biases().isZero());
    CHECK(net.num_params(true) == static_cast<std::size_t>(6 * 4 + 6));
    CHECK(net.num_params(false) == static_cast<std::size_t>(6 * 4 + 6 + 6));
}

TEST_CASE("flatten and unflatten are inverse") {
    Rng rng = make_rng(11);
    for (const bool trainable : {true, false}) {
        const Network net = random_two_layer(rng, 3, 4, trainable);
        const Vector full = flatten(net);
        CHECK(full.size() == static_cast<Eigen::Index>(net.num_params()));
        const Network back = unflatten(net, full);
        CHECK(flatten(back) == full);
        const Vector part = flatten(net, true);
        CHECK(part.size() == static_cast<Eigen::Index>(net.num_params(true)));
        CHECK(flatten(unflatten(net, part, true)) == full);
    }
}

TEST_CASE("parameter norm") {
    CHECK(param_norm_sq(single(0.0, Vector::Zero(2), 0.0)) == 0.0);
    CHECK(param_norm_sq(single(2.0, e(2, 0), 1.0)) == 6.0);
    Network fixed = Network::two_layer(Matrix::Ones(2, 1), Vector::Zero(2), Vector{{1.0, -1.0}}, false);
    CHECK(param_norm_sq(fixed) == 4.0);
    CHECK(trainable_norm_sq(fixed) == 2.0);
}

TEST_CASE("bias sum") {
    const Network neg = Network::two_layer(Matrix::Ones(2, 1), Vector{{-1.0, -2.0}}, Vector{{1.0, 3.0}});
    CHECK(bias_sum(neg) == 0.0);
    const Network pos = Network::two_layer(Matrix::Ones(2, 1), Vector{{2.0, 1.0}}, Vector{{1.0, -1.0}});
    CHECK(bias_sum(pos) == 1.0);
    Rng rng = make_rng(2);
    CHECK_THROWS_AS(bias_sum(random_deep(rng, 2, 3, 3)), std::invalid_argument);
}

TEST_CASE("degree-2 positive homogeneity") {
    Rng rng = make_rng(5);
    std::uniform_real_distribution<double> cdist(0.1, 10.0);
    for (int k = 0; k < 1000; ++k) {
        const Network net = random_two_layer(rng, 3, 4);
        const Vector x = gaussian_vector(rng, 3);
        const double c = std::ldexp(1.0, static_cast<int>(cdist(rng)) - 3);  // powers of two keep it exact
        CHECK(forward(scaled(net, c), x) == c * c * forward(net, x));
    }
}

TEST_CASE("rescale to unit margin") {
    // min margin 4 -> scale 1/2, outputs quarter, norm quarters.
    const Network net = single(2.0, e(2, 0), 0.0);
    Dataset ds = orthonormal_dataset(2, {1.0});
    ds.inputs(0, 0) = 2.0;
    const Network unit = rescale_to_unit_margin(net, ds);
    CHECK(forward(unit, ds.inputs.row(0).transpose()) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(param_norm_sq(unit) == doctest::Approx(param_norm_sq(net) / 4.0));

    ds.inputs(0, 0) = 0.5;  // margin 1: identity
    CHECK(flatten(rescale_to_unit_margin(net, ds)) == flatten(net));

    Rng rng = make_rng(9);
    int done = 0;
    while (done < 50) {
        const Network r = random_two_layer(rng, 3, 5);
        const Dataset sample = sample_dataset(3, 8, 0.0, 100 + done);
        Dataset lab = sample;
        const Vector out = forward_batch(r, lab.inputs);
        if ((out.array() == 0.0).any()) continue;
        lab.labels = out.array().sign().matrix();  // labels the net interpolates
        const Vector before = margins(r, lab);
        Eigen::Index argmin_before = 0, argmin_after = 0;
        const double mm = before.minCoeff(&argmin_before);
        const Network u = rescale_to_unit_margin(r, lab);
        const Vector after = margins(u, lab);
        CHECK(std::abs(after.minCoeff(&argmin_after) - 1.0) <= 1e-12);
        CHECK(argmin_after == argmin_before);
        CHECK(param_norm_sq(u) == doctest::Approx(param_norm_sq(r) / mm).epsilon(1e-12));
        ++done;
    }
}

TEST_CASE("rescale rejects non-interpolating nets and names the sample") {
    const Network net = single(1.0, e(2, 0), 0.0);
    const Dataset ds = orthonormal_dataset(2, {1.0, -1.0});
    try {
        rescale_to_unit_margin(net, ds);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& err) {
        CHECK(std::string(err.what()).find("sample 1") != std::string::npos);
    }
}

TEST_CASE("fixed-output rescale only touches the hidden layer") {
    const Network net = Network::two_layer(Matrix::Identity(2, 2), Vector::Zero(2), Vector{{1.0, -1.0}}, false);
    const Dataset ds = orthonormal_dataset(2, {1.0, -1.0});
    Dataset scaled_ds = ds;
    scaled_ds.inputs *= 3.0;
    const Network unit = rescale_to_unit_margin(net, scaled_ds);
    CHECK(unit.output_weights == net.output_weights);
    CHECK(margins(unit, scaled_ds).minCoeff() == doctest::Approx(1.0));
}

TEST_CASE("network validation") {
    Network bad = Network::two_layer(Matrix::Ones(2, 1), Vector::Zero(2), Vector{{1.0, 1.0}}, true);
    bad.output_weights_trainable = false;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);  // unbalanced
    bad.output_weights = Vector{{1.0, -0.5}};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    Network nan = Network::two_layer(Matrix::Ones(2, 1), Vector::Zero(2), Vector{{1.0, 1.0}});
    nan.biases()[0] = NAN;
    CHECK_THROWS_AS(nan.validate(), std::invalid_argument);
    Network free = Network::two_layer(Matrix::Ones(2, 1), Vector::Zero(2), Vector{{1.0, 1.0}}, true, true);
    free.biases()[1] = 0.1;
    CHECK_THROWS_AS(free.validate(), std::invalid_argument);
}

TEST_CASE("network JSON round trip is exact") {
    Rng rng = make_rng(21);
    const auto dir = std::filesystem::temp_directory_path();
    for (int depth : {2, 3}) {
        Network net = depth == 2 ? random_two_layer(rng, 4, 6, false) : random_deep(rng, 3, 4, 3);
        net.output_weights *= 1.0 / 3.0;
        if (depth == 2) net.output_weights = Vector{{1, 1, 1, -1, -1, -1}};
        const std::string path = (dir / ("net_rt_" + std::to_string(depth) + ".json")).string();
        save_network(net, path);
        const Network back = load_network(path);
        CHECK(flatten(back) == flatten(net));
        CHECK(back.output_weights_trainable == net.output_weights_trainable);
        const json j = read_json_file(path);
        CHECK(j.at("schema_version") == kSchemaVersion);
        CHECK(j.at("depth") == depth);
        CHECK(j.at("d") == net.input_dim);
        CHECK(j.at("widths").size() == net.layers.size());
        std::filesystem::remove(path);
    }
}
