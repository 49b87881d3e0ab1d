#include "overfit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "overfit/kernels.hpp"
#include "overfit/rng.hpp"

namespace overfit {

Loss loss_from_string(const std::string& s) {
    if (s == "logistic") return Loss::Logistic;
    if (s == "exponential") return Loss::Exponential;
    throw std::invalid_argument("unknown loss '" + s + "' (expected logistic or exponential)");
}

std::string to_string(Loss loss) { return loss == Loss::Logistic ? "logistic" : "exponential"; }

double loss_value(Loss loss, double z) {
    if (loss == Loss::Exponential) return std::exp(-z);
    // softplus(-z)
    return z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double loss_slope(Loss loss, double z) {
    if (loss == Loss::Exponential) return -std::exp(-z);
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return -e / (1.0 + e);
    }
    return -1.0 / (1.0 + std::exp(z));
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size < 0) throw std::invalid_argument("batch_size must be >= 0");
    if (width < 2) throw std::invalid_argument("width must be >= 2");
    if (depth < 2) throw std::invalid_argument("depth must be >= 2");
    if (!output_weights_trainable && width % 2 != 0)
        throw std::invalid_argument("a fixed balanced output pattern needs an even width");
    if (!(subgrad_at_zero >= 0.0 && subgrad_at_zero <= 1.0))
        throw std::invalid_argument("subgrad_at_zero must lie in [0, 1]");
    if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
    if (spread_kinks && (depth != 2 || bias_free))
        throw std::invalid_argument("spread_kinks needs a depth-2 network with biases");
}

bool is_log_epoch(int epoch, int total_epochs) {
    return epoch <= 100 || epoch % 100 == 0 || epoch == total_epochs;
}

Network initial_network(const TrainConfig& config, int input_dim) {
    config.validate();
    Rng rng = make_rng(derive_seed(config.seed, {0x1417}));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Network net;
    net.input_dim = input_dim;
    net.bias_free = config.bias_free;
    net.output_weights_trainable = config.output_weights_trainable;
    int fan_in = input_dim;
    for (int l = 0; l + 1 < config.depth; ++l) {
        Layer layer;
        layer.weights.resize(config.width, fan_in);
        const double scale = config.init_scale / std::sqrt(static_cast<double>(fan_in));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = scale * gauss(rng);
        layer.biases = Vector::Zero(config.width);
        if (!config.bias_free && config.bias_init_scale > 0.0)
            for (Eigen::Index r = 0; r < layer.biases.size(); ++r)
                layer.biases[r] = config.bias_init_scale * gauss(rng);
        if (config.spread_kinks) {
            if (input_dim != 1) throw std::invalid_argument("spread_kinks needs input dimension 1");
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            for (Eigen::Index r = 0; r < layer.biases.size(); ++r) layer.biases[r] = -layer.weights(r, 0) * unif(rng);
        }
        net.layers.push_back(std::move(layer));
        fan_in = config.width;
    }
    net.output_weights.resize(config.width);
    if (config.output_weights_trainable) {
        const double s = config.output_init_scale > 0.0 ? config.output_init_scale
                                                         : 1.0 / std::sqrt(static_cast<double>(config.width));
        for (Eigen::Index j = 0; j < net.output_weights.size(); ++j) net.output_weights[j] = s * gauss(rng);
    } else {
        for (Eigen::Index j = 0; j < net.output_weights.size(); ++j)
            net.output_weights[j] = j < config.width / 2 ? 1.0 : -1.0;
    }
    net.validate();
    return net;
}

namespace {

Matrix relu_mask(const Matrix& pre, double at_zero) {
    return pre.unaryExpr([at_zero](double z) { return z > 0.0 ? 1.0 : (z < 0.0 ? 0.0 : at_zero); });
}

// Depth-2 parameters. When d > m the hidden weights are kept as W = W0 + C X:
// gradient steps only ever add combinations of the sample rows, so updating
// the n x m coefficient matrix C is the same iteration at O(n m^2) per epoch
// instead of O(n m d).
class TwoLayerState {
public:
    TwoLayerState(const Network& init, const Matrix& inputs)
        : inputs_(inputs), b_(init.biases()), v_(init.output_weights), proto_(init) {
        dual_ = inputs.cols() > inputs.rows();
        if (dual_) {
            w0_ = init.hidden_weights();
            coef_ = Matrix::Zero(w0_.rows(), inputs.rows());
            gram_ = inputs * inputs.transpose();
            base_pre_ = w0_ * inputs.transpose();
            w0_norm_sq_ = w0_.squaredNorm();
        } else {
            w_ = init.hidden_weights();
        }
    }

    void pre_all(Matrix& pre) const {
        if (dual_) {
            pre = base_pre_;
            pre.noalias() += coef_ * gram_;
        } else {
            pre.noalias() = w_ * inputs_.transpose();
        }
        pre.colwise() += b_;
    }

    Matrix pre_cols(const std::vector<int>& cols) const {
        Matrix pre;
        if (dual_) pre = base_pre_(Eigen::all, cols) + coef_ * gram_(Eigen::all, cols);
        else pre = w_ * inputs_(cols, Eigen::all).transpose();
        pre.colwise() += b_;
        return pre;
    }

    // delta: n x |cols| matrix of dL/d(pre-activation).
    void step_hidden(const Matrix& delta, const std::vector<int>* cols, double lr) {
        if (dual_) {
            if (cols == nullptr) coef_ -= lr * delta;
            else
                for (std::size_t k = 0; k < cols->size(); ++k) coef_.col((*cols)[k]) -= lr * delta.col(k);
        } else {
            if (cols == nullptr) w_.noalias() -= lr * delta * inputs_;
            else w_.noalias() -= lr * delta * inputs_((*cols), Eigen::all);
        }
    }

    Vector& biases() { return b_; }
    Vector& outputs() { return v_; }
    const Vector& outputs() const { return v_; }

    double norm_sq() const {
        double hidden = 0.0;
        if (dual_) {
            hidden = w0_norm_sq_ + 2.0 * (base_pre_.cwiseProduct(coef_)).sum() +
                     (coef_ * gram_).cwiseProduct(coef_).sum();
        } else {
            hidden = w_.squaredNorm();
        }
        return hidden + b_.squaredNorm() + v_.squaredNorm();
    }

    Network materialize() const {
        Network net = proto_;
        net.hidden_weights() = dual_ ? Matrix(w0_ + coef_ * inputs_) : w_;
        net.biases() = b_;
        net.output_weights = v_;
        return net;
    }

private:
    const Matrix& inputs_;
    bool dual_ = false;
    Matrix w_, w0_, coef_, gram_, base_pre_;
    double w0_norm_sq_ = 0.0;
    Vector b_, v_;
    Network proto_;
};

// Generic multi-layer state (direct parametrisation).
class DeepState {
public:
    DeepState(const Network& init, const Matrix& inputs) : net_(init), inputs_(inputs) {}

    Vector forward(const std::vector<int>* cols) {
        acts_.clear();
        pres_.clear();
        acts_.push_back(cols ? Matrix(inputs_((*cols), Eigen::all).transpose()) : Matrix(inputs_.transpose()));
        for (const auto& layer : net_.layers) {
            Matrix z = layer.weights * acts_.back();
            z.colwise() += layer.biases;
            acts_.push_back(z.cwiseMax(0.0));
            pres_.push_back(std::move(z));
        }
        return acts_.back().transpose() * net_.output_weights;
    }

    // g: dL/d(output) per column of the last forward pass.
    void step(const Vector& g, double lr, double at_zero) {
        const Vector dv = acts_.back() * g;
        Matrix upstream = net_.output_weights * g.transpose();
        for (std::size_t l = net_.layers.size(); l-- > 0;) {
            Matrix delta = upstream.cwiseProduct(relu_mask(pres_[l], at_zero));
            if (l > 0) upstream = net_.layers[l].weights.transpose() * delta;
            net_.layers[l].weights.noalias() -= lr * delta * acts_[l].transpose();
            if (!net_.bias_free) net_.layers[l].biases -= lr * delta.rowwise().sum();
        }
        if (net_.output_weights_trainable) net_.output_weights -= lr * dv;
    }

    const Network& net() const { return net_; }

private:
    Network net_;
    const Matrix& inputs_;
    std::vector<Matrix> acts_, pres_;
};

bool params_finite(const Network& net) {
    for (const auto& l : net.layers)
        if (!l.weights.allFinite() || !l.biases.allFinite()) return false;
    return net.output_weights.allFinite();
}

}  // namespace

TrainTrace train_from(const TrainConfig& config, const Dataset& ds, Network init) {
    config.validate();
    ds.validate();
    init.validate();
    if (init.input_dim != ds.d()) throw std::invalid_argument("network input dimension differs from data");
    const int m = ds.m();
    const double lr = config.learning_rate;
    const double reduce = config.reduction == Reduction::Mean ? 1.0 / m : 1.0;
    const bool full_batch = config.batch_size == 0 || config.batch_size >= m;
    const Vector& y = ds.labels;

    Rng shuffle_rng = make_rng(derive_seed(config.seed, {0x5aff1e}));
    std::vector<int> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);

    TrainTrace trace;
    const bool two_layer = init.depth() == 2;
    std::optional<TwoLayerState> shallow_state;
    std::optional<DeepState> deep_state;
    if (two_layer) shallow_state.emplace(init, ds.inputs);
    else deep_state.emplace(init, ds.inputs);
    auto& shallow = shallow_state;
    auto& deep = deep_state;

    auto slopes = [&](const Vector& out, const std::vector<int>* cols) {
        Vector g(out.size());
        for (Eigen::Index k = 0; k < out.size(); ++k) {
            const double yi = y[cols ? (*cols)[k] : k];
            g[k] = reduce * yi * loss_slope(config.loss, yi * out[k]);
        }
        return g;
    };

    // One step of the depth-2 iteration on the given columns (nullptr = all).
    // Buffers reused across epochs; fresh large temporaries per step cost more than the arithmetic.
    Matrix act, delta, pre;
    Vector out;
    const double at_zero = config.subgrad_at_zero;
    auto shallow_step = [&](const Matrix& pre, const Vector& g, const std::vector<int>* cols) {
        act = pre.cwiseMax(0.0);
        const Vector dv = act * g;
        delta = pre.binaryExpr(shallow->outputs() * g.transpose(), [at_zero](double z, double t) {
            return z > 0.0 ? t : (z < 0.0 ? 0.0 : at_zero * t);
        });
        if (!config.bias_free) shallow->biases() -= lr * delta.rowwise().sum();
        shallow->step_hidden(delta, cols, lr);
        if (config.output_weights_trainable) shallow->outputs() -= lr * dv;
    };

    auto current_net = [&]() { return two_layer ? shallow->materialize() : deep->net(); };

    for (int epoch = 0;; ++epoch) {
        if (two_layer) {
            shallow->pre_all(pre);
            out.noalias() = pre.cwiseMax(0.0).transpose() * shallow->outputs();
        } else {
            out = deep->forward(nullptr);
        }
        const Vector z = y.cwiseProduct(out);
        double loss = 0.0;
        int errors = 0;
        for (int i = 0; i < m; ++i) {
            loss += loss_value(config.loss, z[i]);
            if (z[i] <= 0.0) ++errors;
        }
        loss *= reduce;
        if (!std::isfinite(loss) || !out.allFinite()) {
            trace.diverged = true;
            trace.message = "loss became non-finite at epoch " + std::to_string(epoch);
            break;
        }
        if (errors == 0 && !trace.interpolation_epoch) trace.interpolation_epoch = epoch;

        if (is_log_epoch(epoch, config.epochs)) {
            TraceRecord rec;
            rec.epoch = epoch;
            rec.train_errors = errors;
            rec.loss = loss;
            rec.min_margin = z.minCoeff();
            if (two_layer) {
                rec.norm_sq = shallow->norm_sq();
                rec.bias_sum = shallow->outputs().dot(shallow->biases().cwiseMax(0.0));
            } else {
                rec.norm_sq = param_norm_sq(deep->net());
                rec.bias_sum = std::numeric_limits<double>::quiet_NaN();
            }
            rec.norm_margin = rec.norm_sq > 0.0 ? rec.min_margin / rec.norm_sq : 0.0;
            trace.records.push_back(rec);
        }
        if (config.checkpoint_every > 0 && (epoch % config.checkpoint_every == 0 || epoch == config.epochs))
            trace.checkpoints.push_back({epoch, current_net()});
        if (epoch == config.epochs) break;

        if (full_batch) {
            const Vector g = slopes(out, nullptr);
            if (two_layer) shallow_step(pre, g, nullptr);
            else deep->step(g, lr, config.subgrad_at_zero);
            continue;
        }
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (int start = 0; start < m; start += config.batch_size) {
            const int stop = std::min(m, start + config.batch_size);
            const std::vector<int> cols(order.begin() + start, order.begin() + stop);
            if (two_layer) {
                const Matrix bpre = shallow->pre_cols(cols);
                const Vector bout = bpre.cwiseMax(0.0).transpose() * shallow->outputs();
                shallow_step(bpre, slopes(bout, &cols), &cols);
            } else {
                const Vector bout = deep->forward(&cols);
                deep->step(slopes(bout, &cols), lr, config.subgrad_at_zero);
            }
        }
    }

    trace.final_net = current_net();
    if (!trace.diverged && !params_finite(trace.final_net)) {
        trace.diverged = true;
        trace.message = "parameters became non-finite";
    }
    return trace;
}

TrainTrace train(const TrainConfig& config, const Dataset& ds) {
    return train_from(config, ds, initial_network(config, ds.d()));
}

InterpolationCheck interpolates(const Network& net, const Dataset& ds) {
    InterpolationCheck chk;
    if (ds.m() == 0) {
        chk.flag = true;
        return chk;
    }
    const Vector marg = ds.labels.cwiseProduct(forward_batch(net, ds.inputs));
    Eigen::Index worst = 0;
    chk.worst_margin = marg.minCoeff(&worst);
    chk.worst_index = static_cast<int>(worst);
    chk.flag = chk.worst_margin > 0.0;
    return chk;
}

void write_trace_csv(const TrainTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(17);
    out << "epoch,train_errors,loss,min_margin,norm_margin,norm_sq,bias_sum\n";
    for (const auto& r : trace.records)
        out << r.epoch << ',' << r.train_errors << ',' << r.loss << ',' << r.min_margin << ','
            << r.norm_margin << ',' << r.norm_sq << ',' << r.bias_sum << '\n';
}

}  // namespace overfit
