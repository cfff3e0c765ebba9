#pragma once

// Experiment drivers: ablation variants on identical splits, and the
// missing-ratio robustness sweep against the internal baselines.

#include <string>
#include <vector>

#include "gapcast/config.hpp"
#include "gapcast/dataset.hpp"
#include "gapcast/metrics.hpp"
#include "gapcast/trainer.hpp"

namespace gapcast {

// Windowed data -> synthesized missingness -> split -> normalization from the
// training portion. Every stage is driven by the one seed in the config.
inline SplitResult prepare_splits(const Dataset& raw, const RunConfig& cfg) {
    Dataset work = synthesize_missing(raw, cfg.missing_p, cfg.train.seed);
    SplitResult splits = split(work, cfg.train.seed);
    auto [train_norm, rec] = normalize(splits.train);
    splits.train = std::move(train_norm);
    splits.validation = apply_normalization(splits.validation, rec);
    splits.test = apply_normalization(splits.test, rec);
    return splits;
}

struct VariantResult {
    std::string variant;
    MetricsReport test;
    TrainResult outcome;
};

inline TrainConfig variant_config(const TrainConfig& base, const std::string& variant) {
    TrainConfig cfg = base;
    if (variant == "full") {
    } else if (variant == "no_memory") {
        cfg.use_memory = false;
    } else if (variant == "no_adversarial") {
        cfg.lambda = 0.0;
    } else {
        throw std::runtime_error("unknown variant \"" + variant +
                                 "\" (valid: full, no_memory, no_adversarial)");
    }
    return cfg;
}

// Train the requested variants on one shared data preparation and report
// test metrics for each.
inline std::vector<VariantResult> run_ablation(const Dataset& raw, const RunConfig& cfg,
                                               const std::vector<std::string>& variants) {
    SplitResult splits = prepare_splits(raw, cfg);
    std::vector<VariantResult> out;
    for (const std::string& name : variants) {
        TrainConfig vcfg = variant_config(cfg.train, name);
        TrainResult res = train(splits.train, splits.validation, vcfg);
        ForwardOptions opts{vcfg.use_memory};
        VariantResult row;
        row.variant = name;
        row.test = evaluate_model(res.params, splits.test, vcfg.k, opts);
        row.outcome = std::move(res);
        out.push_back(std::move(row));
    }
    return out;
}

struct SweepRow {
    double missing_p = 0.0;
    MetricsReport model;
    MetricsReport carry_forward;
    MetricsReport empirical_mean;
};

// For each ratio: re-synthesize missingness on the fully observed corpus with
// the fixed seed, train, and evaluate model and baselines on the identical
// masked test data.
inline SweepRow run_sweep_point(const Dataset& raw, const RunConfig& base, double p) {
    RunConfig cfg = base;
    cfg.missing_p = p;
    SplitResult splits = prepare_splits(raw, cfg);
    TrainResult res = train(splits.train, splits.validation, cfg.train);
    ForwardOptions opts{cfg.train.use_memory};
    SweepRow row;
    row.missing_p = p;
    row.model = evaluate_model(res.params, splits.test, cfg.train.k, opts);
    row.carry_forward = evaluate_baseline(splits.test, BaselineMethod::carry_forward, cfg.train.k);
    row.empirical_mean =
        evaluate_baseline(splits.test, BaselineMethod::empirical_mean, cfg.train.k);
    return row;
}

inline std::vector<SweepRow> run_missing_ratio_sweep(const Dataset& raw, const RunConfig& base,
                                                     const std::vector<double>& ratios) {
    std::vector<SweepRow> rows;
    for (double p : ratios) rows.push_back(run_sweep_point(raw, base, p));
    return rows;
}

}  // namespace gapcast
