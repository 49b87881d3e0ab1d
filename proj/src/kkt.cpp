#include "overfit/kkt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "overfit/kernels.hpp"

namespace overfit {

GradientOperator::GradientOperator(const Network& net, const Dataset& ds, double subgrad_at_zero)
    : net_(net), inputs_(ds.inputs), labels_(ds.labels) {
    if (net.depth() != 2) throw std::invalid_argument("KKT certification is defined for depth-2 networks");
    if (net.input_dim != ds.d()) throw std::invalid_argument("network input dimension differs from data");
    const Matrix pre = pre_activations(net, ds.inputs);
    act_ = pre.cwiseMax(0.0);
    mask_ = pre.unaryExpr([subgrad_at_zero](double z) { return z > 0.0 ? 1.0 : (z < 0.0 ? 0.0 : subgrad_at_zero); });
}

Network GradientOperator::apply(const Eigen::Ref<const Vector>& u) const {
    const Vector c = u.cwiseProduct(labels_);
    const Vector& v = net_.output_weights;
    Network out = net_;
    const Matrix scaled_mask = v.asDiagonal() * mask_ * c.asDiagonal();  // n x m
    out.hidden_weights() = scaled_mask * inputs_;
    out.biases() = net_.bias_free ? Vector::Zero(v.size()) : Vector(scaled_mask.rowwise().sum());
    out.output_weights = net_.output_weights_trainable ? Vector(act_ * c) : Vector::Zero(v.size());
    return out;
}

Vector GradientOperator::apply_transpose(const Network& r) const {
    Matrix t = r.hidden_weights() * inputs_.transpose();  // n x m
    if (!net_.bias_free) t.colwise() += r.biases();
    Vector q = (net_.output_weights.asDiagonal() * mask_).cwiseProduct(t).colwise().sum().transpose();
    if (net_.output_weights_trainable) q += act_.transpose() * r.output_weights;
    return q.cwiseProduct(labels_);
}

Matrix GradientOperator::gram() const {
    const Vector v2 = net_.output_weights.cwiseAbs2();
    Matrix kernel = inputs_ * inputs_.transpose();
    if (!net_.bias_free) kernel.array() += 1.0;
    Matrix q = (mask_.transpose() * v2.asDiagonal() * mask_).cwiseProduct(kernel);
    if (net_.output_weights_trainable) q += act_.transpose() * act_;
    return labels_.asDiagonal() * q * labels_.asDiagonal();
}

namespace {

Vector trainable_vector(const Network& net) { return flatten(net, true); }

double largest_eigenvalue(const Matrix& q) {
    Vector x = Vector::Ones(q.rows()).normalized();
    double est = 0.0;
    for (int it = 0; it < 100; ++it) {
        const Vector z = q * x;
        const double nz = z.norm();
        if (nz == 0.0) return 0.0;
        const double next = x.dot(z);
        x = z / nz;
        if (it > 0 && std::abs(next - est) <= 1e-6 * std::abs(next)) {
            est = next;
            break;
        }
        est = next;
    }
    // Power iteration approaches from below; the cap keeps the step stable.
    return std::max(est, q.diagonal().maxCoeff()) * 1.05;
}

// Lawson-Hanson on min 1/2 l'Ql - c'l, l >= 0, warm-started from a feasible point.
Vector active_set_nnls(const Matrix& q, const Vector& c, Vector x) {
    const Eigen::Index k = q.rows();
    const double tol = 1e-13 * std::max({c.cwiseAbs().maxCoeff(), q.diagonal().maxCoeff(), 1e-300});
    std::vector<char> in(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) in[static_cast<std::size_t>(i)] = x[i] > 0.0;
    auto solve_on = [&](std::vector<int>& idx) {
        idx.clear();
        for (Eigen::Index i = 0; i < k; ++i)
            if (in[static_cast<std::size_t>(i)]) idx.push_back(static_cast<int>(i));
        Vector z = Vector::Zero(k);
        if (!idx.empty()) {
            const Matrix qa = q(idx, idx);
            const Vector za = Eigen::CompleteOrthogonalDecomposition<Matrix>(qa).solve(Vector(c(idx)));
            z(idx) = za;
        }
        return z;
    };
    std::vector<int> idx;
    for (Eigen::Index outer = 0; outer <= 3 * k; ++outer) {
        Vector z = solve_on(idx);
        for (Eigen::Index inner = 0; inner <= k; ++inner) {
            double alpha = 1.0;
            bool clipped = false;
            for (int i : idx)
                if (z[i] <= 0.0) {
                    alpha = std::min(alpha, x[i] / (x[i] - z[i]));
                    clipped = true;
                }
            if (!clipped) break;
            x += alpha * (z - x);
            for (int i : idx)
                if (x[i] <= 0.0 || (z[i] <= 0.0 && x[i] <= tol)) {
                    x[i] = 0.0;
                    in[static_cast<std::size_t>(i)] = 0;
                }
            z = solve_on(idx);
        }
        x = z;
        const Vector w = c - q * x;
        Eigen::Index best = -1;
        for (Eigen::Index i = 0; i < k; ++i)
            if (!in[static_cast<std::size_t>(i)] && w[i] > tol && (best < 0 || w[i] > w[best])) best = i;
        if (best < 0) break;
        in[static_cast<std::size_t>(best)] = 1;
    }
    return x;
}

}  // namespace

DualSolve solve_stationarity_duals(const GradientOperator& op, const Network& target,
                                   const std::vector<int>& support, int max_iterations, double rel_tol) {
    const auto k = static_cast<Eigen::Index>(support.size());
    const Vector theta = trainable_vector(target);
    const double theta_norm = theta.norm();
    DualSolve sol;
    sol.duals = Vector::Zero(k);
    if (k == 0) {
        sol.rel_residual = theta_norm > 0.0 ? 1.0 : 0.0;
        return sol;
    }

    const Matrix q_full = op.gram();
    const Vector c_full = op.apply_transpose(target);
    const Matrix q = q_full(support, support);
    const Vector c = c_full(support);
    if (q.diagonal().maxCoeff() <= 0.0) throw std::invalid_argument("gradient matrix on the support is all zero");

    auto residual_norm = [&](const Vector& lambda) {
        Vector full = Vector::Zero(op.num_samples());
        full(support) = lambda;
        return (theta - trainable_vector(op.apply(full))).norm();
    };

    // Accelerated projected gradient on 1/2 l'Ql - c'l with gradient restarts.
    const double lipschitz = largest_eigenvalue(q);
    Vector lambda = Vector::Zero(k);
    Vector extrap = lambda;
    double t = 1.0;
    int it = 0;
    for (; it < max_iterations; ++it) {
        const Vector grad = q * extrap - c;
        const Vector next = (extrap - grad / lipschitz).cwiseMax(0.0);
        const double step = (next - lambda).norm();
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        if ((extrap - next).dot(next - lambda) > 0.0) {
            extrap = next;
            t = 1.0;
        } else {
            extrap = next + ((t - 1.0) / t_next) * (next - lambda);
            t = t_next;
        }
        lambda = next;
        if (step <= rel_tol * std::max(lambda.norm(), 1e-300)) {
            ++it;
            break;
        }
    }
    sol.iterations = it;

    // Exact active-set finish, kept when no worse.
    double best = residual_norm(lambda);
    Vector exact = active_set_nnls(q, c, lambda);
    std::vector<int> active;
    for (Eigen::Index i = 0; i < k; ++i)
        if (exact[i] > 0.0) active.push_back(static_cast<int>(i));
    if (!active.empty()) {
        const Matrix qa = q(active, active);
        const Eigen::CompleteOrthogonalDecomposition<Matrix> dec(qa);
        for (int refine = 0; refine < 2; ++refine) {
            Vector full = Vector::Zero(op.num_samples());
            full(support) = exact;
            const Network r = unflatten(op.net(), theta - trainable_vector(op.apply(full)), true);
            const Vector corr = op.apply_transpose(r)(support);
            const Vector corr_a = corr(active);
            Vector step = Vector::Zero(k);
            const Vector step_a = dec.solve(corr_a);
            step(active) = step_a;
            if ((exact + step).minCoeff() < 0.0) break;
            exact += step;
        }
    }
    const double exact_res = residual_norm(exact);
    if (exact_res <= best) {
        lambda = exact;
        best = exact_res;
    }
    sol.duals = lambda;
    sol.rel_residual = theta_norm > 0.0 ? best / theta_norm : best;
    return sol;
}

KktReport recover_duals(const Network& net, const Dataset& ds, double margin_tol, double subgrad_at_zero) {
    if (net.depth() != 2) throw std::invalid_argument("KKT certification is defined for depth-2 networks");
    ds.validate();
    const Vector marg = ds.labels.cwiseProduct(forward_batch(net, ds.inputs));
    Eigen::Index worst = 0;
    const double min_margin = marg.minCoeff(&worst);
    if (!(min_margin > 0.0))
        throw std::invalid_argument("network does not interpolate: sample " + std::to_string(worst) +
                                    " has margin " + std::to_string(min_margin));
    if (min_margin < 1.0 - margin_tol)
        throw std::invalid_argument("network is not unit-margin rescaled (min margin " + std::to_string(min_margin) +
                                    ")");

    KktReport rep;
    rep.min_margin = min_margin;
    for (int i = 0; i < ds.m(); ++i)
        if (marg[i] <= 1.0 + margin_tol) rep.support_set.push_back(i);

    const GradientOperator op(net, ds, subgrad_at_zero);
    rep.iteration_budget = 10000;
    const DualSolve sol = solve_stationarity_duals(op, net, rep.support_set, rep.iteration_budget, 1e-10);
    rep.iterations = sol.iterations;
    rep.stationarity_rel_residual = sol.rel_residual;
    rep.duals.assign(static_cast<std::size_t>(ds.m()), 0.0);
    for (std::size_t s = 0; s < rep.support_set.size(); ++s) {
        const int i = rep.support_set[s];
        rep.duals[static_cast<std::size_t>(i)] = sol.duals[static_cast<Eigen::Index>(s)];
        rep.comp_slack_violation =
            std::max(rep.comp_slack_violation, sol.duals[static_cast<Eigen::Index>(s)] * std::abs(marg[i] - 1.0));
    }
    rep.dual_min = *std::min_element(rep.duals.begin(), rep.duals.end());
    return rep;
}

std::vector<KktCheckpointReport> kkt_distance_along_training(const std::vector<Checkpoint>& checkpoints,
                                                             const Dataset& ds, double margin_tol) {
    std::vector<KktCheckpointReport> out;
    for (const auto& cp : checkpoints) {
        if (!interpolates(cp.net, ds).flag) continue;
        const Network unit = rescale_to_unit_margin(cp.net, ds);
        out.push_back({cp.epoch, recover_duals(unit, ds, margin_tol)});
    }
    return out;
}

BiasPositivity bias_positivity_check(const Network& net) {
    if (net.depth() != 2) throw std::invalid_argument("bias check is defined for depth-2 networks");
    if (net.output_weights_trainable)
        throw std::invalid_argument("bias check applies to networks with fixed +1/-1 output weights");
    BiasPositivity res;
    res.all_bias_nonneg = net.biases().minCoeff() >= 0.0;
    for (Eigen::Index j = 0; j < net.width(); ++j)
        res.bias_gap += net.output_weights[j] > 0.0 ? net.biases()[j] : -net.biases()[j];
    return res;
}

json to_json(const KktReport& rep) {
    return {{"duals", rep.duals},
            {"stationarity_rel_residual", rep.stationarity_rel_residual},
            {"min_margin", rep.min_margin},
            {"dual_min", rep.dual_min},
            {"comp_slack_violation", rep.comp_slack_violation},
            {"support_set", rep.support_set},
            {"iterations", rep.iterations},
            {"iteration_budget", rep.iteration_budget}};
}

}  // namespace overfit
