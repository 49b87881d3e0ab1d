#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "overfit/constructions.hpp"
#include "overfit/data.hpp"
#include "overfit/experiments.hpp"
#include "overfit/io.hpp"
#include "overfit/kkt.hpp"
#include "overfit/trainer.hpp"
#include "overfit/univariate.hpp"

using namespace overfit;

namespace {

void emit(const json& j, const std::string& out) {
    if (out.empty() || out == "-")
        std::cout << j.dump(1) << '\n';
    else
        write_json_file(j, out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training and analysis of two-layer ReLU networks that interpolate noisy labels"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Sample a noisy dataset");
    int gen_d = 1, gen_m = 100;
    double gen_p = 0.1;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--d", gen_d, "Input dimension (1 = Unif[0,1], else sphere)")->required();
    gen->add_option("--m", gen_m, "Number of samples")->required();
    gen->add_option("--p", gen_p, "Label flip probability")->required();
    gen->add_option("--seed", gen_seed);
    gen->add_option("--out", gen_out)->required();

    // train
    auto* tr = app.add_subcommand("train", "Gradient descent on the logistic or exponential loss");
    TrainConfig cfg;
    std::string tr_data, tr_loss = "logistic", tr_out, tr_trace, tr_reduction = "sum";
    bool fixed_outputs = false;
    tr->add_option("--data", tr_data)->required();
    tr->add_option("--loss", tr_loss)->check(CLI::IsMember({"logistic", "exponential"}));
    tr->add_option("--lr", cfg.learning_rate);
    tr->add_option("--epochs", cfg.epochs);
    tr->add_option("--width", cfg.width);
    tr->add_option("--depth", cfg.depth);
    tr->add_option("--seed", cfg.seed);
    tr->add_option("--batch-size", cfg.batch_size, "0 = full batch");
    tr->add_option("--reduction", tr_reduction)->check(CLI::IsMember({"sum", "mean"}));
    tr->add_option("--init-scale", cfg.init_scale);
    tr->add_option("--output-init-scale", cfg.output_init_scale);
    tr->add_option("--bias-init-scale", cfg.bias_init_scale);
    tr->add_flag("--fixed-outputs", fixed_outputs, "Pin output weights to a balanced +1/-1 pattern");
    tr->add_flag("--bias-free", cfg.bias_free);
    tr->add_flag("--spread-kinks", cfg.spread_kinks, "d = 1: place the initial kinks uniformly in [0,1]");
    tr->add_option("--out", tr_out)->required();
    tr->add_option("--trace", tr_trace);

    // kkt
    auto* kk = app.add_subcommand("kkt", "Recover KKT duals of a depth-2 network rescaled to unit margin");
    std::string kk_model, kk_data, kk_out;
    double kk_tol = kTrainedMarginTol;
    kk->add_option("--model", kk_model)->required();
    kk->add_option("--data", kk_data)->required();
    kk->add_option("--margin-tol", kk_tol);
    kk->add_option("--out", kk_out);

    // analyze1d
    auto* an = app.add_subcommand("analyze1d", "Exact analysis of a univariate network");
    std::string an_model, an_data, an_out;
    double an_value_tol = 1e-6, an_lin_tol = 1e-6;
    an->add_option("--model", an_model)->required();
    an->add_option("--data", an_data)->required();
    an->add_option("--value-tol", an_value_tol);
    an->add_option("--linearity-tol", an_lin_tol);
    an->add_option("--out", an_out);

    // construct
    auto* co = app.add_subcommand("construct", "Build an analytic network for a dataset");
    std::string co_kind, co_data, co_out;
    int co_width = 2;
    std::int64_t co_mc = 100000;
    std::uint64_t co_seed = 0;
    co->add_option("--kind", co_kind)->required()->check(CLI::IsMember({"feasible", "orthogonal-kkt"}));
    co->add_option("--data", co_data)->required();
    co->add_option("--width", co_width, "Even width of the feasible construction");
    co->add_option("--mc-samples", co_mc);
    co->add_option("--seed", co_seed);
    co->add_option("--out", co_out);

    // sweep
    auto* sw = app.add_subcommand("sweep", "Run a resumable experiment grid into a CSV file");
    std::string sw_config, sw_out;
    int sw_workers = 1;
    sw->add_option("--config", sw_config)->required();
    sw->add_option("--out", sw_out)->required();
    sw->add_option("--workers", sw_workers);

    // lemma
    auto* le = app.add_subcommand("lemma", "Monte Carlo check of a probabilistic data lemma");
    std::string le_id, le_params = "{}", le_out;
    int le_trials = 1000;
    std::uint64_t le_seed = 0;
    le->add_option("--id", le_id)->required();
    le->add_option("--trials", le_trials);
    le->add_option("--params", le_params, "JSON object of lemma parameters");
    le->add_option("--seed", le_seed);
    le->add_option("--out", le_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            save_dataset(sample_dataset(gen_d, gen_m, gen_p, gen_seed), gen_out);
        } else if (*tr) {
            cfg.loss = loss_from_string(tr_loss);
            cfg.reduction = tr_reduction == "mean" ? Reduction::Mean : Reduction::Sum;
            cfg.output_weights_trainable = !fixed_outputs;
            const Dataset ds = load_dataset(tr_data);
            const TrainTrace trace = train(cfg, ds);
            save_network(trace.final_net, tr_out);
            if (!tr_trace.empty()) write_trace_csv(trace, tr_trace);
            const TraceRecord& last = trace.records.back();
            std::cerr << "epochs " << last.epoch << ", train errors " << last.train_errors << ", loss " << last.loss
                      << ", interpolated "
                      << (trace.interpolation_epoch ? "at epoch " + std::to_string(*trace.interpolation_epoch) : "no")
                      << (trace.diverged ? ", diverged: " + trace.message : "") << '\n';
            return trace.diverged ? 2 : 0;
        } else if (*kk) {
            const Network net = load_network(kk_model);
            const Dataset ds = load_dataset(kk_data);
            emit(to_json(recover_duals(rescale_to_unit_margin(net, ds), ds, kk_tol)), kk_out);
        } else if (*an) {
            const Network net = load_network(an_model);
            const Dataset ds = load_dataset(an_data);
            const PiecewiseLinear pw = to_piecewise(net);
            json out;
            out["exact_clean_error"] = exact_clean_error_1d(pw);
            json runs = json::array();
            for (const auto& r : negative_run_witness(pw, ds)) runs.push_back(to_json(r));
            out["negative_runs"] = runs;
            if (interpolates(net, ds).flag) {
                const Network unit = rescale_to_unit_margin(net, ds);
                const PiecewiseLinear upw = to_piecewise(unit);
                out["segment_report"] = to_json(check_segment_structure(upw, ds, an_value_tol, an_lin_tol));
                out["falsifier_result"] = to_json(local_min_falsifier(unit, ds, default_delta_grid()));
            } else {
                out["segment_report"] = nullptr;
                out["falsifier_result"] = nullptr;
                out["note"] = "network does not interpolate the data; structural checks skipped";
            }
            emit(out, an_out);
        } else if (*co) {
            const Dataset ds = load_dataset(co_data);
            if (co_kind == "feasible")
                emit(to_json(build_feasible_highdim(ds, co_width)), co_out);
            else
                emit(to_json(build_orthogonal_kkt(ds, co_mc, co_seed)), co_out);
        } else if (*sw) {
            auto [grid, opts] = sweep_config_from_json(read_json_file(sw_config));
            opts.workers = sw_workers;
            const auto rows = run_sweep(grid, opts, sw_out);
            std::cerr << rows.size() << " new rows written to " << sw_out << '\n';
        } else if (*le) {
            const LemmaVerdict v = verify_lemma(le_id, json::parse(le_params), le_trials, le_seed);
            emit(to_json(v), le_out);
            return v.consistent ? 0 : 3;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
