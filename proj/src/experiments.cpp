#include "overfit/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "overfit/data.hpp"
#include "overfit/kernels.hpp"
#include "overfit/kkt.hpp"
#include "overfit/rng.hpp"
#include "overfit/univariate.hpp"

namespace overfit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string sanitize(std::string s) {
    std::replace_if(s.begin(), s.end(), [](char c) { return c == ',' || c == '\n' || c == '\r'; }, ';');
    return s;
}

std::string csv_line(const SweepRecord& r) {
    std::ostringstream out;
    out << r.d << ',' << r.m << ',' << r.n << ',' << r.depth << ',' << fmt(r.p) << ',' << r.seed << ','
        << r.train_errors_final << ',' << (r.interp_epoch ? std::to_string(*r.interp_epoch) : "") << ','
        << fmt(r.clean_error) << ',' << fmt(r.clean_error_stderr) << ',' << fmt(r.bias_sum) << ','
        << fmt(r.bias_gap) << ',' << fmt(r.kkt_residual) << ',' << fmt(r.norm_sq) << ',' << fmt(r.wall_time_s)
        << ',' << sanitize(r.status);
    return out.str();
}

double parse_double(const std::string& s) { return s == "nan" || s.empty() ? kNaN : std::stod(s); }

}  // namespace

std::string sweep_key(int d, int m, int n, int depth, double p, std::uint64_t seed) {
    return "d" + std::to_string(d) + "_m" + std::to_string(m) + "_n" + std::to_string(n) + "_L" +
           std::to_string(depth) + "_p" + fmt(p) + "_s" + std::to_string(seed);
}

std::uint64_t cell_data_seed(int d, int m, double p, std::uint64_t seed) {
    return derive_seed(seed, {0xda7a, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(m),
                              std::bit_cast<std::uint64_t>(p)});
}

std::uint64_t cell_train_seed(int d, int m, int n, int depth, double p, std::uint64_t seed) {
    return derive_seed(seed, {0x7a1, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(m),
                              static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(depth),
                              std::bit_cast<std::uint64_t>(p)});
}

SweepRecord run_cell(int d, int m, int n, int depth, double p, std::uint64_t seed, const SweepOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    SweepRecord rec;
    rec.d = d;
    rec.m = m;
    rec.n = n;
    rec.depth = depth;
    rec.p = p;
    rec.seed = seed;
    rec.clean_error = rec.clean_error_stderr = rec.bias_sum = rec.bias_gap = rec.kkt_residual = rec.norm_sq = kNaN;
    try {
        const Dataset ds = sample_dataset(d, m, p, cell_data_seed(d, m, p, seed));
        TrainConfig cfg = opts.base;
        cfg.width = n;
        cfg.depth = depth;
        cfg.seed = cell_train_seed(d, m, n, depth, p, seed);
        cfg.checkpoint_every = 0;
        const TrainTrace trace = train(cfg, ds);
        const Network& net = trace.final_net;
        if (opts.model_dir) {
            std::filesystem::create_directories(*opts.model_dir);
            save_network(net, (std::filesystem::path(*opts.model_dir) / (sweep_key(d, m, n, depth, p, seed) + ".json"))
                                  .string());
        }

        const Vector marg = margins(net, ds);
        rec.train_errors_final = static_cast<int>((marg.array() <= 0.0).count());
        rec.interp_epoch = trace.interpolation_epoch;
        rec.norm_sq = param_norm_sq(net);
        const std::uint64_t mc_seed = derive_seed(cfg.seed, {0xc1ea});
        if (d == 1 && depth == 2) {
            rec.clean_error = exact_clean_error_1d(to_piecewise(net));
            rec.clean_error_stderr = 0.0;
        } else {
            const ErrorEstimate e =
                d == 1 ? clean_error_mc_interval(net, opts.mc_samples, mc_seed) : clean_error_mc(net, d, opts.mc_samples, mc_seed);
            rec.clean_error = e.point_estimate;
            rec.clean_error_stderr = e.std_error;
        }
        if (depth == 2) {
            rec.bias_sum = bias_sum(net);
            if (!net.output_weights_trainable) rec.bias_gap = bias_positivity_check(net).bias_gap;
            if (opts.compute_kkt && rec.train_errors_final == 0)
                rec.kkt_residual = recover_duals(rescale_to_unit_margin(net, ds), ds).stationarity_rel_residual;
        }
        if (trace.diverged) rec.status = "diverged: " + trace.message;
    } catch (const std::exception& e) {
        rec.status = std::string("error: ") + e.what();
    }
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

std::vector<SweepRecord> read_sweep_csv(const std::string& path) {
    std::vector<SweepRecord> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    if (!std::getline(in, line)) return out;
    if (line != kSweepHeader) throw std::runtime_error(path + " does not start with the sweep header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() != 16) throw std::runtime_error("malformed sweep row: " + line);
        SweepRecord r;
        r.d = std::stoi(f[0]);
        r.m = std::stoi(f[1]);
        r.n = std::stoi(f[2]);
        r.depth = std::stoi(f[3]);
        r.p = std::stod(f[4]);
        r.seed = std::stoull(f[5]);
        r.train_errors_final = std::stoi(f[6]);
        if (!f[7].empty()) r.interp_epoch = std::stoi(f[7]);
        r.clean_error = parse_double(f[8]);
        r.clean_error_stderr = parse_double(f[9]);
        r.bias_sum = parse_double(f[10]);
        r.bias_gap = parse_double(f[11]);
        r.kkt_residual = parse_double(f[12]);
        r.norm_sq = parse_double(f[13]);
        r.wall_time_s = parse_double(f[14]);
        r.status = f[15];
        out.push_back(r);
    }
    return out;
}

std::vector<SweepRecord> run_sweep(const SweepGrid& grid, const SweepOptions& opts, const std::string& csv_path) {
    if (grid.size() == 0) throw std::invalid_argument("sweep grid is empty");
    if (opts.workers < 1) throw std::invalid_argument("workers must be >= 1");

    std::set<std::string> done;
    for (const auto& r : read_sweep_csv(csv_path)) done.insert(sweep_key(r.d, r.m, r.n, r.depth, r.p, r.seed));

    struct Cell {
        int d, m, n, depth;
        double p;
        std::uint64_t seed;
    };
    std::vector<Cell> todo;
    for (int d : grid.d)
        for (int m : grid.m)
            for (int n : grid.n)
                for (int depth : grid.depth)
                    for (double p : grid.p)
                        for (std::uint64_t s : grid.seeds)
                            if (done.insert(sweep_key(d, m, n, depth, p, s)).second) todo.push_back({d, m, n, depth, p, s});

    const bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
    std::ofstream out(csv_path, std::ios::app);
    if (!out) throw std::runtime_error("cannot write " + csv_path);
    if (fresh) out << kSweepHeader << '\n' << std::flush;

    std::vector<SweepRecord> records;
    std::mutex writer;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < todo.size(); k = next++) {
            const Cell& c = todo[k];
            const SweepRecord rec = run_cell(c.d, c.m, c.n, c.depth, c.p, c.seed, opts);
            const std::lock_guard<std::mutex> lock(writer);
            out << csv_line(rec) << '\n' << std::flush;
            records.push_back(rec);
        }
    };
    const int threads = std::min<int>(opts.workers, static_cast<int>(std::max<std::size_t>(todo.size(), 1)));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return records;
}

std::pair<SweepGrid, SweepOptions> sweep_config_from_json(const json& j) {
    SweepGrid grid;
    SweepOptions opts;
    const json& g = j.at("grid");
    grid.d = g.at("d").get<std::vector<int>>();
    grid.m = g.at("m").get<std::vector<int>>();
    grid.n = g.at("n").get<std::vector<int>>();
    if (g.contains("depth")) grid.depth = g.at("depth").get<std::vector<int>>();
    grid.p = g.at("p").get<std::vector<double>>();
    grid.seeds = g.at("seeds").get<std::vector<std::uint64_t>>();

    const json t = j.value("train", json::object());
    TrainConfig& c = opts.base;
    if (t.contains("loss")) c.loss = loss_from_string(t.at("loss").get<std::string>());
    if (t.contains("reduction")) {
        const auto r = t.at("reduction").get<std::string>();
        if (r != "sum" && r != "mean") throw std::invalid_argument("reduction must be sum or mean");
        c.reduction = r == "sum" ? Reduction::Sum : Reduction::Mean;
    }
    c.learning_rate = t.value("learning_rate", c.learning_rate);
    c.epochs = t.value("epochs", c.epochs);
    c.batch_size = t.value("batch_size", c.batch_size);
    c.init_scale = t.value("init_scale", c.init_scale);
    c.output_init_scale = t.value("output_init_scale", c.output_init_scale);
    c.bias_init_scale = t.value("bias_init_scale", c.bias_init_scale);
    c.output_weights_trainable = t.value("output_weights_trainable", c.output_weights_trainable);
    c.bias_free = t.value("bias_free", c.bias_free);
    c.spread_kinks = t.value("spread_kinks", c.spread_kinks);
    c.subgrad_at_zero = t.value("subgrad_at_zero", c.subgrad_at_zero);

    opts.mc_samples = j.value("mc_samples", opts.mc_samples);
    opts.compute_kkt = j.value("compute_kkt", opts.compute_kkt);
    if (j.contains("model_dir")) opts.model_dir = j.at("model_dir").get<std::string>();
    if (grid.size() == 0) throw std::invalid_argument("sweep grid is empty");
    return {grid, opts};
}

LemmaVerdict verify_lemma(const std::string& id, const json& params, int trials, std::uint64_t seed) {
    if (trials < 100) throw std::invalid_argument("verify_lemma needs at least 100 trials");
    LemmaVerdict v;
    v.id = id;
    v.trials = trials;
    v.params = params.is_null() ? json::object() : params;

    // Returns true when trial `rng` violates the lemma's event.
    std::function<bool(Rng&)> fails;
    if (id == "spacing_max_gap" || id == "spacing_small_gaps") {
        const int m = v.params.value("m", 1000);
        const double delta = v.params.value("delta", 0.1);
        if (m < 2 || !(delta > 0.0)) throw std::invalid_argument("spacing lemmas need m >= 2 and delta > 0");
        v.params["m"] = m;
        v.params["delta"] = delta;
        v.theoretical_bound = delta / 4.0;
        const bool max_gap = id == "spacing_max_gap";
        const double mp1 = m + 1.0;
        fails = [m, delta, mp1, max_gap](Rng& rng) {
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            std::vector<double> x(static_cast<std::size_t>(m));
            for (auto& xi : x) xi = unif(rng);
            const SpacingStats s = spacing_stats(std::move(x));
            if (max_gap) return s.max_interior_gap > std::log(8.0 * mp1 / delta) / mp1;
            return static_cast<double>(s.small_gap_count) >= mp1 / 8.0;
        };
    } else if (id == "inner_product_tail") {
        const int d = v.params.value("d", 100);
        const double t = v.params.value("t", 0.5);
        if (d < 2) throw std::invalid_argument("inner_product_tail needs d >= 2");
        v.params["d"] = d;
        v.params["t"] = t;
        v.theoretical_bound = 2.0 * std::exp(-d * t * t / 2.0);
        fails = [d, t](Rng& rng) {
            const Vector a = sample_sphere(rng, d);
            const Vector b = sample_sphere(rng, d);
            return std::abs(a.dot(b)) >= t;
        };
    } else if (id == "gram_norm") {
        const int d = v.params.value("d", 1000);
        const int m = v.params.value("m", 50);
        const double t = v.params.value("t", 3.0);
        const double c = v.params.value("c", 2.0);
        if (d < 2 || m < 1) throw std::invalid_argument("gram_norm needs d >= 2 and m >= 1");
        v.params["d"] = d;
        v.params["m"] = m;
        v.params["t"] = t;
        v.params["c"] = c;
        v.theoretical_bound = 2.0 * std::exp(-t);
        const double r = (m + t) / d;
        const double threshold = c * (std::sqrt(r) + r);
        fails = [d, m, threshold](Rng& rng) {
            Matrix x(m, d);
            for (int i = 0; i < m; ++i) x.row(i) = sample_sphere(rng, d).transpose();
            const Matrix dev = x * x.transpose() - Matrix::Identity(m, m);
            const Eigen::SelfAdjointEigenSolver<Matrix> es(dev, Eigen::EigenvaluesOnly);
            return es.eigenvalues().cwiseAbs().maxCoeff() >= threshold;
        };
    } else if (id == "negative_count") {
        const double p = v.params.value("p", 0.1);
        const int m = v.params.value("m", 1000);
        if (!(p > 0.0 && p < 1.0) || m < 1) throw std::invalid_argument("negative_count needs p in (0,1) and m >= 1");
        v.params["p"] = p;
        v.params["m"] = m;
        v.theoretical_bound = std::exp(-p * m / 5.0);
        fails = [p, m](Rng& rng) {
            std::binomial_distribution<int> count(m, p);
            return count(rng) > 1.5 * p * m;
        };
    } else {
        throw std::invalid_argument("unknown lemma id '" + id +
                                    "' (expected spacing_max_gap, spacing_small_gaps, inner_product_tail, gram_norm "
                                    "or negative_count)");
    }

    int failures = 0;
#pragma omp parallel for reduction(+ : failures) schedule(static)
    for (int k = 0; k < trials; ++k) {
        Rng rng = make_rng(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
        if (fails(rng)) ++failures;
    }
    v.failures = failures;
    v.empirical_failure_rate = static_cast<double>(failures) / trials;
    const double q = std::min(v.theoretical_bound, 1.0);
    v.margin_of_error = 3.0 * std::sqrt(q * (1.0 - q) / trials);
    v.consistent = v.empirical_failure_rate <= v.theoretical_bound + v.margin_of_error;
    return v;
}

json to_json(const LemmaVerdict& v) {
    return {{"id", v.id},
            {"params", v.params},
            {"trials", v.trials},
            {"failures", v.failures},
            {"empirical_failure_rate", v.empirical_failure_rate},
            {"theoretical_bound", v.theoretical_bound},
            {"margin_of_error", v.margin_of_error},
            {"consistent", v.consistent}};
}

}  // namespace overfit
