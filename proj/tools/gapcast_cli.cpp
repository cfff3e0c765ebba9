// Command-line front end: corpus synthesis, training, evaluation, the
// missing-ratio sweep, and the ablation comparison. Every run writes a
// resolved-config snapshot that reproduces it exactly.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "gapcast/experiments.hpp"
#include "gapcast/model_io.hpp"
#include "gapcast/synth.hpp"

namespace fs = std::filesystem;
using namespace gapcast;

namespace {

struct Overrides {
    std::string config_path;
    std::string data;
    std::string out_dir;
    int64_t n = 0, k = 0, stride = 0, k_prime = 0, epochs = 0, batch_size = 0;
    int64_t hidden = 0, memory_slots = 0, memory_dim = 0, critic_steps = 0, critic_batch = 0;
    int64_t snippet_count = 0;
    long long seed = 0;
    double lambda = 0.0, missing_p = 0.0, learning_rate = 0.0, clip_c = 0.0, grad_clip_norm = 0.0;
    bool no_memory = false;
};

void add_common_options(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--config", ov.config_path, "key=value configuration file");
    cmd->add_option("--data", ov.data, "input CSV path");
    cmd->add_option("--out-dir", ov.out_dir, "output directory");
    cmd->add_option("--n", ov.n, "history length");
    cmd->add_option("--k", ov.k, "forecast horizon");
    cmd->add_option("--stride", ov.stride, "window stride (0 = non-overlapping)");
    cmd->add_option("--missing-p", ov.missing_p, "synthetic missing ratio in [0,1)");
    cmd->add_option("--seed", ov.seed, "master seed");
    cmd->add_option("--lambda", ov.lambda, "adversarial weight");
    cmd->add_option("--k-prime", ov.k_prime, "generated snippet length");
    cmd->add_option("--epochs", ov.epochs, "training epochs");
    cmd->add_option("--batch-size", ov.batch_size, "samples per update");
    cmd->add_option("--learning-rate", ov.learning_rate, "SGD learning rate");
    cmd->add_option("--hidden", ov.hidden, "LSTM hidden width");
    cmd->add_option("--memory-slots", ov.memory_slots, "memory rows L");
    cmd->add_option("--memory-dim", ov.memory_dim, "memory slot width");
    cmd->add_option("--clip-c", ov.clip_c, "critic weight clip constant");
    cmd->add_option("--critic-steps", ov.critic_steps, "critic updates per generator update");
    cmd->add_option("--critic-batch", ov.critic_batch, "snippets per critic side per update");
    cmd->add_option("--snippet-count", ov.snippet_count, "real snippet pool size");
    cmd->add_option("--grad-clip-norm", ov.grad_clip_norm, "generator gradient norm cap");
    cmd->add_flag("--no-memory", ov.no_memory, "zero the memory readout (ablation)");
}

RunConfig resolve_config(const CLI::App* cmd, const Overrides& ov) {
    RunConfig cfg;
    if (!ov.config_path.empty()) cfg = load_config(ov.config_path);
    auto passed = [&](const std::string& name) { return cmd->count(name) > 0; };
    if (passed("--data")) cfg.data = ov.data;
    if (passed("--out-dir")) cfg.out_dir = ov.out_dir;
    if (passed("--n")) cfg.n = ov.n;
    if (passed("--k")) cfg.k = ov.k;
    if (passed("--stride")) cfg.stride = ov.stride;
    if (passed("--missing-p")) cfg.missing_p = ov.missing_p;
    if (passed("--seed")) cfg.train.seed = static_cast<uint64_t>(ov.seed);
    if (passed("--lambda")) cfg.train.lambda = ov.lambda;
    if (passed("--k-prime")) cfg.train.k_prime = ov.k_prime;
    if (passed("--epochs")) cfg.train.epochs = ov.epochs;
    if (passed("--batch-size")) cfg.train.batch_size = ov.batch_size;
    if (passed("--learning-rate")) cfg.train.learning_rate = ov.learning_rate;
    if (passed("--hidden")) cfg.train.hidden = ov.hidden;
    if (passed("--memory-slots")) cfg.train.memory_slots = ov.memory_slots;
    if (passed("--memory-dim")) cfg.train.memory_dim = ov.memory_dim;
    if (passed("--clip-c")) cfg.train.clip_c = ov.clip_c;
    if (passed("--critic-steps")) cfg.train.critic_steps_per_gen = ov.critic_steps;
    if (passed("--critic-batch")) cfg.train.critic_batch = ov.critic_batch;
    if (passed("--snippet-count")) cfg.train.snippet_count = ov.snippet_count;
    if (passed("--grad-clip-norm")) cfg.train.grad_clip_norm = ov.grad_clip_norm;
    if (passed("--no-memory")) cfg.train.use_memory = !ov.no_memory;
    cfg.train.k = cfg.k;
    return cfg;
}

Dataset load_data_or_fail(const RunConfig& cfg) {
    if (cfg.data.empty()) throw std::runtime_error("no data file given (set data= or --data)");
    if (!fs::exists(cfg.data)) throw std::runtime_error("data file does not exist: " + cfg.data);
    return load_csv(cfg.data, cfg.n, cfg.k, cfg.effective_stride());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path);
}

void write_snapshot(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    write_text(cfg.out_dir + "/config.resolved", serialize_config(cfg));
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

int cmd_synth(int64_t rows, int64_t d, long long seed, double noise, const std::string& out) {
    CsvTable table = synth_corpus(rows, d, static_cast<uint64_t>(seed), noise);
    write_csv(out, table);
    std::cout << "wrote " << rows << " rows x " << d << " variables to " << out << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    Dataset raw = load_data_or_fail(cfg);
    write_snapshot(cfg);
    SplitResult splits = prepare_splits(raw, cfg);
    TrainResult res = train(splits.train, splits.validation, cfg.train);

    std::string log_text;
    for (const EpochLog& e : res.log) log_text += e.line() + "\n";
    write_text(cfg.out_dir + "/metrics.log", log_text);

    CheckpointBundle bundle;
    bundle.cfg = cfg;
    bundle.norm = splits.train.norm;
    bundle.model = res.params;
    bundle.critic = res.critic;
    bundle.has_critic = cfg.train.lambda > 0.0;
    bundle.best_epoch = res.best_epoch;
    save_bundle(cfg.out_dir + "/checkpoint.gckp", bundle);

    ForwardOptions opts{cfg.train.use_memory};
    MetricsReport test = evaluate_model(res.params, splits.test, cfg.train.k, opts);
    std::cout << "best epoch " << res.best_epoch << " val_rmse=" << fmt(res.best_val_rmse)
              << " test_rmse=" << fmt(test.rmse) << " test_mae=" << fmt(test.mae) << "\n"
              << "outputs in " << cfg.out_dir << "\n";
    return 0;
}

std::string metrics_table(const MetricsReport& r, int64_t horizon) {
    std::string out = "step,rmse,mae\n";
    for (size_t s = 0; s < r.rmse_per_step.size(); ++s) {
        if (horizon > 0 && static_cast<int64_t>(s + 1) != horizon) continue;
        out += std::to_string(s + 1) + "," + fmt(r.rmse_per_step[s]) + "," +
               fmt(r.mae_per_step[s]) + "\n";
    }
    if (horizon <= 0) out += "all," + fmt(r.rmse) + "," + fmt(r.mae) + "\n";
    return out;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data,
                 const std::string& split_name, int64_t horizon, bool denormalize,
                 const std::string& out_path) {
    CheckpointBundle b = load_bundle(checkpoint);
    RunConfig cfg = b.cfg;
    cfg.data = data;
    Dataset raw = synthesize_missing(load_data_or_fail(cfg), cfg.missing_p, cfg.train.seed);
    SplitResult splits = split(raw, cfg.train.seed);
    splits.train = apply_normalization(splits.train, b.norm);
    splits.validation = apply_normalization(splits.validation, b.norm);
    splits.test = apply_normalization(splits.test, b.norm);

    Dataset* ds;
    Dataset all;
    if (split_name == "train")
        ds = &splits.train;
    else if (split_name == "validation")
        ds = &splits.validation;
    else if (split_name == "test")
        ds = &splits.test;
    else if (split_name == "all") {
        all = splits.train;
        all.samples.insert(all.samples.end(), splits.validation.samples.begin(),
                           splits.validation.samples.end());
        all.samples.insert(all.samples.end(), splits.test.samples.begin(),
                           splits.test.samples.end());
        ds = &all;
    } else {
        throw std::runtime_error("unknown split \"" + split_name +
                                 "\" (valid: train, validation, test, all)");
    }
    if (ds->size() == 0) throw std::runtime_error("selected split \"" + split_name + "\" is empty");
    if (horizon > cfg.k) throw std::runtime_error("--horizon exceeds checkpoint horizon k");

    ForwardOptions opts{cfg.train.use_memory};
    detail::MetricAccum acc;
    for (const MtsSample& s : ds->samples) {
        Tensor pred = forecast(s, b.model, cfg.k, opts);
        Tensor truth = s.target;
        if (denormalize) {
            pred = pred.clone();
            truth = truth.clone();
            for (int64_t i = 0; i < pred.dim(0); ++i) {
                for (int64_t j = 0; j < pred.dim(1); ++j) {
                    pred.at(i, j) = denormalize_value(pred.at(i, j), j, b.norm);
                    if (s.target_mask.at(i, j) == 1.0)
                        truth.at(i, j) = denormalize_value(truth.at(i, j), j, b.norm);
                }
            }
        }
        acc.add(pred, truth, s.target_mask);
    }
    MetricsReport report = acc.report(ds->size());

    std::string table = metrics_table(report, horizon);
    std::cout << table;
    if (!out_path.empty()) write_text(out_path, table);
    return 0;
}

std::vector<double> parse_ratio_list(const std::string& text) {
    std::vector<double> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, ',')) {
        if (cur.empty()) continue;
        out.push_back(std::stod(cur));
    }
    if (out.empty()) throw std::runtime_error("empty --missing-ratios list");
    return out;
}

int cmd_sweep(const RunConfig& cfg, const std::string& ratios_text, int64_t jobs) {
    std::vector<double> ratios = parse_ratio_list(ratios_text);
    Dataset raw = load_data_or_fail(cfg);
    write_snapshot(cfg);

    std::vector<SweepRow> rows(ratios.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= ratios.size()) return;
            rows[i] = run_sweep_point(raw, cfg, ratios[i]);
        }
    };
    int64_t nthreads =
        std::max<int64_t>(1, std::min<int64_t>(jobs, static_cast<int64_t>(ratios.size())));
    std::vector<std::thread> pool;
    for (int64_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::string csv =
        "missing_p,model_rmse,model_mae,carry_forward_rmse,carry_forward_mae,"
        "empirical_mean_rmse,empirical_mean_mae\n";
    for (const SweepRow& r : rows) {
        csv += fmt(r.missing_p) + "," + fmt(r.model.rmse) + "," + fmt(r.model.mae) + "," +
               fmt(r.carry_forward.rmse) + "," + fmt(r.carry_forward.mae) + "," +
               fmt(r.empirical_mean.rmse) + "," + fmt(r.empirical_mean.mae) + "\n";
    }
    write_text(cfg.out_dir + "/sweep.csv", csv);
    std::cout << csv;
    return 0;
}

std::vector<std::string> parse_variant_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, ','))
        if (!cur.empty()) out.push_back(cur);
    if (out.empty()) throw std::runtime_error("empty --variants list");
    for (const std::string& v : out) variant_config(TrainConfig{}, v);  // validate names early
    return out;
}

int cmd_ablate(const RunConfig& cfg, const std::string& variants_text) {
    std::vector<std::string> variants = parse_variant_list(variants_text);
    Dataset raw = load_data_or_fail(cfg);
    write_snapshot(cfg);
    std::vector<VariantResult> rows = run_ablation(raw, cfg, variants);
    std::string csv = "variant,test_rmse,test_mae,best_epoch\n";
    for (const VariantResult& r : rows)
        csv += r.variant + "," + fmt(r.test.rmse) + "," + fmt(r.test.mae) + "," +
               std::to_string(r.outcome.best_epoch) + "\n";
    write_text(cfg.out_dir + "/ablation.csv", csv);
    std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-series forecaster for incomplete multivariate data"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "generate the bundled sinusoid corpus");
    int64_t synth_rows = 24000, synth_d = 4;
    long long synth_seed = 1;
    double synth_noise = 0.05;
    std::string synth_out = "corpus.csv";
    synth->add_option("--rows", synth_rows, "total rows");
    synth->add_option("--d", synth_d, "variable count");
    synth->add_option("--seed", synth_seed, "corpus seed");
    synth->add_option("--noise", synth_noise, "additive noise sigma");
    synth->add_option("--out", synth_out, "output CSV path");

    Overrides train_ov;
    auto* train_cmd = app.add_subcommand("train", "train and write checkpoint + metric log");
    add_common_options(train_cmd, train_ov);

    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
    std::string eval_ckpt, eval_data, eval_split = "test", eval_out;
    int64_t eval_horizon = 0;
    bool eval_denorm = false;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--data", eval_data, "input CSV path")->required();
    eval_cmd->add_option("--split", eval_split, "train|validation|test|all");
    eval_cmd->add_option("--horizon", eval_horizon, "restrict to one horizon step");
    eval_cmd->add_flag("--denormalize", eval_denorm, "report in original units");
    eval_cmd->add_option("--out", eval_out, "also write the table to this file");

    Overrides sweep_ov;
    auto* sweep_cmd = app.add_subcommand("sweep", "missing-ratio robustness sweep");
    add_common_options(sweep_cmd, sweep_ov);
    std::string ratios = "0.1,0.3,0.5,0.7,0.9";
    int64_t jobs = 1;
    sweep_cmd->add_option("--missing-ratios", ratios, "comma-separated ratio list");
    sweep_cmd->add_option("--jobs", jobs, "parallel sweep points");

    Overrides ablate_ov;
    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare ablation variants");
    add_common_options(ablate_cmd, ablate_ov);
    std::string variants = "full,no_memory,no_adversarial";
    ablate_cmd->add_option("--variants", variants, "comma-separated variant list");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return cmd_synth(synth_rows, synth_d, synth_seed, synth_noise, synth_out);
        if (train_cmd->parsed()) return cmd_train(resolve_config(train_cmd, train_ov));
        if (eval_cmd->parsed())
            return cmd_evaluate(eval_ckpt, eval_data, eval_split, eval_horizon, eval_denorm,
                                eval_out);
        if (sweep_cmd->parsed())
            return cmd_sweep(resolve_config(sweep_cmd, sweep_ov), ratios, jobs);
        if (ablate_cmd->parsed()) return cmd_ablate(resolve_config(ablate_cmd, ablate_ov), variants);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
