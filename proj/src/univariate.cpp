#include "overfit/univariate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "overfit/trainer.hpp"

namespace overfit {

namespace {

double relu(double z) { return z > 0.0 ? z : 0.0; }

// Pieces of pw restricted to [lo, hi]: calls f(l, r, value_at_l, slope).
template <class F>
void for_each_piece(const PiecewiseLinear& pw, double lo, double hi, F&& f) {
    if (!(lo < hi)) return;
    double value = pw(lo);
    double slope = pw.slope_at(lo);
    auto k = static_cast<std::size_t>(std::upper_bound(pw.breakpoints.begin(), pw.breakpoints.end(), lo) -
                                      pw.breakpoints.begin());
    double left = lo;
    while (true) {
        const double right = k < pw.breakpoints.size() ? std::min(pw.breakpoints[k], hi) : hi;
        f(left, right, value, slope);
        if (right >= hi) break;
        value += slope * (right - left);
        slope += pw.slope_deltas[k];
        left = right;
        ++k;
    }
}

std::vector<int> sorted_order(const Dataset& ds) {
    std::vector<int> order(static_cast<std::size_t>(ds.m()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return ds.inputs(a, 0) < ds.inputs(b, 0); });
    return order;
}

void require_univariate(const Network& net) {
    if (net.depth() != 2) throw std::invalid_argument("univariate analysis needs a depth-2 network");
    if (net.input_dim != 1) throw std::invalid_argument("univariate analysis needs input dimension 1");
}

}  // namespace

double PiecewiseLinear::operator()(double x) const {
    double value = base_value + base_slope * x;
    for (std::size_t k = 0; k < breakpoints.size() && breakpoints[k] < x; ++k)
        value += slope_deltas[k] * (x - breakpoints[k]);
    return value;
}

double PiecewiseLinear::slope_at(double x) const {
    double slope = base_slope;
    for (std::size_t k = 0; k < breakpoints.size() && breakpoints[k] <= x; ++k) slope += slope_deltas[k];
    return slope;
}

double PiecewiseLinear::max_abs_slope(double lo, double hi) const {
    double best = std::abs(slope_at(lo));
    for_each_piece(*this, lo, hi, [&](double, double, double, double s) { best = std::max(best, std::abs(s)); });
    return best;
}

double PiecewiseLinear::nonpositive_measure(double lo, double hi) const {
    double total = 0.0;
    for_each_piece(*this, lo, hi, [&](double l, double r, double fl, double s) {
        const double fr = fl + s * (r - l);
        if (fl <= 0.0 && fr <= 0.0) {
            total += r - l;
        } else if (fl <= 0.0 || fr <= 0.0) {
            const double root = l + fl / (fl - fr) * (r - l);
            total += fl <= 0.0 ? root - l : r - root;
        }
    });
    return total;
}

double PiecewiseLinear::positive_measure(double lo, double hi) const {
    double total = 0.0;
    for_each_piece(*this, lo, hi, [&](double l, double r, double fl, double s) {
        const double fr = fl + s * (r - l);
        if (fl > 0.0 && fr > 0.0) {
            total += r - l;
        } else if (fl > 0.0 || fr > 0.0) {
            const double root = l + fl / (fl - fr) * (r - l);
            total += fl > 0.0 ? root - l : r - root;
        }
    });
    return total;
}

double PiecewiseLinear::max_on(double lo, double hi) const {
    double best = (*this)(lo);
    for_each_piece(*this, lo, hi, [&](double l, double r, double fl, double s) {
        best = std::max({best, fl, fl + s * (r - l)});
    });
    return best;
}

double PiecewiseLinear::min_on(double lo, double hi) const {
    double best = (*this)(lo);
    for_each_piece(*this, lo, hi, [&](double l, double r, double fl, double s) {
        best = std::min({best, fl, fl + s * (r - l)});
    });
    return best;
}

PiecewiseLinear to_piecewise(const Network& net) {
    require_univariate(net);
    PiecewiseLinear pw;
    std::vector<std::pair<double, double>> kinks;
    const Matrix& w = net.hidden_weights();
    for (int j = 0; j < net.width(); ++j) {
        const double v = net.output_weights[j], wj = w(j, 0), b = net.biases()[j];
        pw.base_value += v * relu(b);
        if (wj == 0.0) continue;
        const double t = -b / wj;
        if (t > 0.0) {
            // Inactive just right of 0 when w > 0, active when w < 0.
            if (wj > 0.0) {
                kinks.emplace_back(t, v * wj);
            } else {
                pw.base_slope += v * wj;
                kinks.emplace_back(t, -v * wj);
            }
        } else if (wj > 0.0) {
            pw.base_slope += v * wj;
        }
    }
    std::sort(kinks.begin(), kinks.end());
    for (const auto& [t, delta] : kinks) {
        if (!pw.breakpoints.empty() && pw.breakpoints.back() == t)
            pw.slope_deltas.back() += delta;
        else {
            pw.breakpoints.push_back(t);
            pw.slope_deltas.push_back(delta);
        }
    }
    std::size_t out = 0;
    for (std::size_t k = 0; k < pw.breakpoints.size(); ++k) {
        if (pw.slope_deltas[k] == 0.0) continue;
        pw.breakpoints[out] = pw.breakpoints[k];
        pw.slope_deltas[out] = pw.slope_deltas[k];
        ++out;
    }
    pw.breakpoints.resize(out);
    pw.slope_deltas.resize(out);
    return pw;
}

double exact_clean_error_1d(const PiecewiseLinear& pw) { return pw.nonpositive_measure(0.0, 1.0); }

int count_slope_increases(const PiecewiseLinear& pw, double a, double b) {
    if (!(a < b)) throw std::invalid_argument("count_slope_increases needs a < b");
    int count = 0;
    for (std::size_t k = 0; k < pw.breakpoints.size(); ++k)
        if (pw.breakpoints[k] > a && pw.breakpoints[k] < b && pw.slope_deltas[k] > 0.0) ++count;
    return count;
}

std::vector<NegativeRun> negative_run_witness(const PiecewiseLinear& pw, const Dataset& ds) {
    if (ds.d() != 1) throw std::invalid_argument("negative runs are defined for d = 1");
    const std::vector<int> order = sorted_order(ds);
    const int m = ds.m();
    std::vector<NegativeRun> runs;
    int pos = 0;
    while (pos < m) {
        if (ds.labels[order[static_cast<std::size_t>(pos)]] > 0.0) {
            ++pos;
            continue;
        }
        int end = pos;
        while (end < m && ds.labels[order[static_cast<std::size_t>(end)]] < 0.0) ++end;
        if (end - pos >= 5) {
            NegativeRun run{pos, end - pos, std::nullopt};
            for (int l = pos; l + 1 < end; ++l) {
                const double lo = ds.inputs(order[static_cast<std::size_t>(l)], 0);
                const double hi = ds.inputs(order[static_cast<std::size_t>(l + 1)], 0);
                if (pw.max_on(lo, hi) < 0.0) {
                    run.witness = l;
                    break;
                }
            }
            runs.push_back(run);
        }
        pos = end;
    }
    return runs;
}

bool SegmentReport::all_ok() const {
    auto all = [](const std::vector<bool>& v) { return std::all_of(v.begin(), v.end(), [](bool b) { return b; }); };
    return all(dip_left_value_ok) && all(dip_right_value_ok) && all(dip_linear_ok) && all(plus_plus_ok);
}

SegmentReport check_segment_structure(const PiecewiseLinear& pw, const Dataset& ds, double value_tol,
                                      double linearity_tol) {
    if (ds.d() != 1) throw std::invalid_argument("segment structure is defined for d = 1");
    for (int i = 0; i < ds.m(); ++i) {
        const double margin = ds.labels[i] * pw(ds.inputs(i, 0));
        if (!(margin > 0.0))
            throw std::invalid_argument("network does not interpolate: sample " + std::to_string(i) + " has margin " +
                                        std::to_string(margin));
    }
    SegmentReport rep;
    rep.order = sorted_order(ds);
    const int m = ds.m();
    auto x_at = [&](int pos) { return ds.inputs(rep.order[static_cast<std::size_t>(pos)], 0); };
    auto y_at = [&](int pos) { return static_cast<int>(ds.labels[rep.order[static_cast<std::size_t>(pos)]]); };
    const double slope_scale = m > 0 ? pw.max_abs_slope(std::min(0.0, x_at(0)), std::max(1.0, x_at(m - 1))) : 0.0;

    for (int pos = 0; pos + 1 < m; ++pos) {
        Segment seg;
        seg.left = pos;
        seg.right = pos + 1;
        seg.x_left = x_at(pos);
        seg.x_right = x_at(pos + 1);
        seg.label_left = y_at(pos);
        seg.label_right = y_at(pos + 1);
        seg.value_left = pw(seg.x_left);
        seg.value_right = pw(seg.x_right);
        seg.is_linear = true;
        for (std::size_t k = 0; k < pw.breakpoints.size(); ++k) {
            const double t = pw.breakpoints[k];
            if (t > seg.x_left && t < seg.x_right && std::abs(pw.slope_deltas[k]) > linearity_tol * slope_scale)
                seg.is_linear = false;
        }
        seg.negative_measure = pw.nonpositive_measure(seg.x_left, seg.x_right);
        rep.segments.push_back(seg);
    }

    for (int pos = 1; pos + 1 < m; ++pos) {
        if (!(y_at(pos - 1) > 0 && y_at(pos) < 0 && y_at(pos + 1) > 0)) continue;
        const Segment& seg = rep.segments[static_cast<std::size_t>(pos)];
        rep.dip_positions.push_back(pos);
        rep.dip_left_value_ok.push_back(std::abs(seg.value_left + 1.0) <= value_tol);
        rep.dip_right_value_ok.push_back(std::abs(seg.value_right - 1.0) <= value_tol);
        rep.dip_linear_ok.push_back(seg.is_linear);
    }
    for (std::size_t s = 0; s < rep.segments.size(); ++s) {
        const Segment& seg = rep.segments[s];
        if (seg.label_left > 0 && seg.label_right > 0) {
            rep.plus_plus_segments.push_back(static_cast<int>(s));
            rep.plus_plus_ok.push_back(pw.min_on(seg.x_left, seg.x_right) >= -value_tol);
        }
    }
    return rep;
}

std::string to_string(PerturbationKind kind) {
    switch (kind) {
        case PerturbationKind::ShiftKink: return "shift_kink";
        case PerturbationKind::Transfer: return "transfer";
        case PerturbationKind::NegativeSink: return "negative_sink";
        case PerturbationKind::ScaleOnly: return "scale_only";
    }
    return "unknown";
}

namespace {

struct Neuron {
    double v, w, b;
};

// New parameters of (j1, j2); j2's entry is unchanged for ScaleOnly.
std::pair<Neuron, Neuron> perturbed_pair(Neuron n1, Neuron n2, PerturbationKind kind, double delta) {
    Neuron p1 = n1, p2 = n2;
    switch (kind) {
        case PerturbationKind::ShiftKink:
            p1.v = (1.0 - delta) * n1.v;
            p1.b = n1.b - delta / (1.0 - delta) * (n1.w * n2.b / n2.w - n1.b);
            p2.v = (1.0 + delta * n1.v * n1.w / (n2.v * n2.w)) * n2.v;
            break;
        case PerturbationKind::Transfer:
        case PerturbationKind::NegativeSink:
            p1.v = (1.0 - delta) * n1.v;
            p2.w = n2.w + delta * n1.v * n1.w / n2.v;
            p2.b = n2.b + delta * n1.v * n1.b / n2.v;
            break;
        case PerturbationKind::ScaleOnly:
            p1.v = (1.0 - delta) * n1.v;
            break;
    }
    return {p1, p2};
}

Neuron neuron(const Network& net, int j) {
    return {net.output_weights[j], net.hidden_weights()(j, 0), net.biases()[j]};
}

void check_pair(const Network& net, PerturbationKind kind, int j1, int j2) {
    require_univariate(net);
    const int n = net.width();
    if (j1 < 0 || j1 >= n) throw std::invalid_argument("neuron index j1 out of range");
    if (kind != PerturbationKind::ScaleOnly && (j2 < 0 || j2 >= n || j2 == j1))
        throw std::invalid_argument("neuron index j2 out of range or equal to j1");
}

double sq(const Neuron& n) { return n.v * n.v + n.w * n.w + n.b * n.b; }

}  // namespace

Network perturb(const Network& net, PerturbationKind kind, int j1, int j2, double delta) {
    check_pair(net, kind, j1, j2);
    Network out = net;
    const Neuron n1 = neuron(net, j1);
    const Neuron n2 = kind == PerturbationKind::ScaleOnly ? n1 : neuron(net, j2);
    if (delta == 0.0) return out;
    const auto [p1, p2] = perturbed_pair(n1, n2, kind, delta);
    out.output_weights[j1] = p1.v;
    out.hidden_weights()(j1, 0) = p1.w;
    out.biases()[j1] = p1.b;
    if (kind != PerturbationKind::ScaleOnly) {
        out.output_weights[j2] = p2.v;
        out.hidden_weights()(j2, 0) = p2.w;
        out.biases()[j2] = p2.b;
    }
    return out;
}

double leading_norm_coefficient(const Network& net, PerturbationKind kind, int j1, int j2) {
    check_pair(net, kind, j1, j2);
    const Neuron a = neuron(net, j1);
    switch (kind) {
        case PerturbationKind::ShiftKink: {
            const Neuron c = neuron(net, j2);
            return a.v * a.v - a.v * a.w * c.v / c.w - a.b * (a.b - a.w * c.b / c.w);
        }
        case PerturbationKind::Transfer:
        case PerturbationKind::NegativeSink: {
            const Neuron c = neuron(net, j2);
            return a.v * a.v - a.v * a.w * c.w / c.v - a.v * a.b * c.b / c.v;
        }
        case PerturbationKind::ScaleOnly: return a.v * a.v;
    }
    return 0.0;
}

std::vector<double> default_delta_grid() {
    std::vector<double> grid;
    for (int k = 4; k <= 20; ++k) grid.push_back(std::ldexp(1.0, -k));
    return grid;
}

FalsifierResult local_min_falsifier(const Network& net, const Dataset& ds, const std::vector<double>& delta_grid) {
    require_univariate(net);
    if (ds.d() != 1) throw std::invalid_argument("falsifier is defined for d = 1");
    const Vector marg = margins(net, ds);
    if (ds.m() > 0 && marg.minCoeff() < 1.0 - 1e-9)
        throw std::invalid_argument("falsifier needs margins >= 1; rescale the network first");

    std::vector<double> deltas = delta_grid;
    std::sort(deltas.begin(), deltas.end());
    const int n = net.width();
    const int m = ds.m();
    const Vector out = ds.labels.cwiseProduct(marg);  // N(x_i)
    const double norm_sq = param_norm_sq(net);
    std::vector<Neuron> neurons;
    for (int j = 0; j < n; ++j) neurons.push_back(neuron(net, j));
    auto kink = [](const Neuron& a) { return -a.b / a.w; };

    // Candidate (kind, j2) lists per j1 in (j2, kind) order; ScaleOnly sits after every pair.
    std::vector<FalsifierResult> per_j1(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
    for (int j1 = 0; j1 < n; ++j1) {
        FalsifierResult& res = per_j1[static_cast<std::size_t>(j1)];
        const Neuron a = neurons[static_cast<std::size_t>(j1)];
        if (a.w == 0.0 || a.v == 0.0) continue;
        const double s1 = a.v * a.w;
        std::vector<std::pair<int, PerturbationKind>> cands;
        bool has_partner = false;
        for (int j2 = 0; j2 < n; ++j2) {
            const Neuron c = neurons[static_cast<std::size_t>(j2)];
            if (j2 == j1 || c.w == 0.0 || c.v == 0.0) continue;
            const double s2 = c.v * c.w;
            if (s1 > 0.0 && s2 < 0.0 && kink(c) >= kink(a)) {
                has_partner = true;
                cands.emplace_back(j2, PerturbationKind::ShiftKink);
            }
            if (s1 > 0.0 && s2 < 0.0) cands.emplace_back(j2, PerturbationKind::Transfer);
            if (s1 < 0.0 && s2 > 0.0) cands.emplace_back(j2, PerturbationKind::NegativeSink);
        }
        if (s1 > 0.0 && !has_partner) cands.emplace_back(-1, PerturbationKind::ScaleOnly);

        for (const auto& [j2, kind] : cands) {
            const Neuron c = j2 >= 0 ? neurons[static_cast<std::size_t>(j2)] : a;
            for (const double delta : deltas) {
                ++res.candidates_tried;
                const auto [p1, p2] = perturbed_pair(a, c, kind, delta);
                const bool pair = kind != PerturbationKind::ScaleOnly;
                const double new_norm = norm_sq - sq(a) + sq(p1) + (pair ? sq(p2) - sq(c) : 0.0);
                if (!(new_norm < norm_sq - 1e-12)) continue;
                bool feasible = true;
                for (int i = 0; i < m && feasible; ++i) {
                    const double x = ds.inputs(i, 0);
                    double value = out[i] - a.v * relu(a.w * x + a.b) + p1.v * relu(p1.w * x + p1.b);
                    if (pair) value += p2.v * relu(p2.w * x + p2.b) - c.v * relu(c.w * x + c.b);
                    feasible = ds.labels[i] * value >= 1.0 - 1e-12;
                }
                if (!feasible) continue;
                res.found = true;
                res.kind = kind;
                res.j1 = j1;
                res.j2 = j2;
                res.delta = delta;
                res.norm_decrease = norm_sq - new_norm;
                break;
            }
            if (res.found) break;
        }
    }

    FalsifierResult result;
    for (const auto& r : per_j1) {
        result.candidates_tried += r.candidates_tried;
        if (r.found && !result.found) {
            const int tried = result.candidates_tried;
            result = r;
            result.candidates_tried = tried;
        }
        if (result.found) break;
    }
    std::ostringstream msg;
    if (result.found) {
        msg << to_string(result.kind) << " perturbation of neurons (" << result.j1 << ", " << result.j2
            << ") at delta " << result.delta << " keeps every margin >= 1 and lowers ||theta||^2 by "
            << result.norm_decrease;
    } else {
        msg << "no improvement found at grid resolution";
    }
    result.description = msg.str();
    return result;
}

json to_json(const SegmentReport& rep) {
    json segs = json::array();
    for (const auto& s : rep.segments)
        segs.push_back({{"left", s.left},
                        {"right", s.right},
                        {"x_left", s.x_left},
                        {"x_right", s.x_right},
                        {"labels", {s.label_left, s.label_right}},
                        {"value_left", s.value_left},
                        {"value_right", s.value_right},
                        {"is_linear", s.is_linear},
                        {"negative_measure", s.negative_measure}});
    return {{"order", rep.order},
            {"segments", segs},
            {"dip_positions", rep.dip_positions},
            {"dip_left_value_ok", rep.dip_left_value_ok},
            {"dip_right_value_ok", rep.dip_right_value_ok},
            {"dip_linear_ok", rep.dip_linear_ok},
            {"plus_plus_segments", rep.plus_plus_segments},
            {"plus_plus_ok", rep.plus_plus_ok},
            {"all_ok", rep.all_ok()}};
}

json to_json(const NegativeRun& run) {
    return {{"first", run.first}, {"length", run.length}, {"witness", run.witness ? json(*run.witness) : json()}};
}

json to_json(const FalsifierResult& res) {
    return {{"found", res.found},
            {"kind", res.found ? json(to_string(res.kind)) : json()},
            {"j1", res.j1},
            {"j2", res.j2},
            {"delta", res.delta},
            {"norm_decrease", res.norm_decrease},
            {"candidates_tried", res.candidates_tried},
            {"description", res.description}};
}

}  // namespace overfit
