#pragma once

// Masked forecast metrics and the two internal reference baselines.

#include <cmath>
#include <string>
#include <vector>

#include "gapcast/dataset.hpp"
#include "gapcast/local_stats.hpp"
#include "gapcast/tensor.hpp"

namespace gapcast {

struct MetricsReport {
    double rmse = 0.0;
    double mae = 0.0;
    std::vector<double> rmse_per_step;  // one entry per horizon step
    std::vector<double> mae_per_step;
    int64_t sample_count = 0;
    int64_t observed_cells = 0;
};

namespace detail {

struct MetricAccum {
    std::vector<double> se, ae;
    std::vector<int64_t> count;

    void ensure(size_t steps) {
        if (se.size() < steps) {
            se.resize(steps, 0.0);
            ae.resize(steps, 0.0);
            count.resize(steps, 0);
        }
    }

    void add(const Tensor& pred, const Tensor& truth, const Tensor& mask) {
        if (pred.shape() != truth.shape() || pred.shape() != mask.shape())
            op_error("metrics", "shape mismatch " + shape_str(pred.shape()) + " vs " +
                                    shape_str(truth.shape()) + " vs " + shape_str(mask.shape()));
        ensure(static_cast<size_t>(pred.dim(0)));
        for (int64_t i = 0; i < pred.dim(0); ++i) {
            for (int64_t j = 0; j < pred.dim(1); ++j) {
                if (mask.at(i, j) != 1.0) continue;
                double e = pred.at(i, j) - truth.at(i, j);
                se[static_cast<size_t>(i)] += e * e;
                ae[static_cast<size_t>(i)] += std::fabs(e);
                ++count[static_cast<size_t>(i)];
            }
        }
    }

    MetricsReport report(int64_t samples) const {
        MetricsReport r;
        r.sample_count = samples;
        double se_total = 0.0, ae_total = 0.0;
        int64_t n_total = 0;
        for (size_t s = 0; s < se.size(); ++s) {
            se_total += se[s];
            ae_total += ae[s];
            n_total += count[s];
            double denom = count[s] > 0 ? static_cast<double>(count[s]) : 1.0;
            r.rmse_per_step.push_back(std::sqrt(se[s] / denom));
            r.mae_per_step.push_back(ae[s] / denom);
        }
        if (n_total == 0) op_error("metrics", "no observed cells");
        r.observed_cells = n_total;
        r.rmse = std::sqrt(se_total / static_cast<double>(n_total));
        r.mae = ae_total / static_cast<double>(n_total);
        return r;
    }
};

}  // namespace detail

// Pooled over all samples and observed cells.
inline double rmse(const std::vector<Tensor>& preds, const std::vector<Tensor>& truths,
                   const std::vector<Tensor>& masks) {
    detail::MetricAccum acc;
    for (size_t i = 0; i < preds.size(); ++i) acc.add(preds[i], truths[i], masks[i]);
    return acc.report(static_cast<int64_t>(preds.size())).rmse;
}

inline double mae(const std::vector<Tensor>& preds, const std::vector<Tensor>& truths,
                  const std::vector<Tensor>& masks) {
    detail::MetricAccum acc;
    for (size_t i = 0; i < preds.size(); ++i) acc.add(preds[i], truths[i], masks[i]);
    return acc.report(static_cast<int64_t>(preds.size())).mae;
}

enum class BaselineMethod { carry_forward, empirical_mean };

inline BaselineMethod baseline_from_name(const std::string& name) {
    if (name == "carry_forward") return BaselineMethod::carry_forward;
    if (name == "empirical_mean") return BaselineMethod::empirical_mean;
    throw std::runtime_error("unknown baseline \"" + name +
                             "\" (valid: carry_forward, empirical_mean)");
}

// carry_forward repeats the last observed value of each variable for all k
// steps (0 when the variable was never observed); empirical_mean repeats the
// mean of the observed history.
inline Tensor baseline_forecast(const MtsSample& sample, BaselineMethod method, int64_t k) {
    ContinuationStats cont = continuation_stats(sample.history, sample.history_mask);
    const Tensor& row = method == BaselineMethod::carry_forward ? cont.last_obs : cont.emp_mean;
    Tensor out = Tensor::zeros({k, sample.d()});
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < sample.d(); ++j) out.at(i, j) = row.at(j);
    return out;
}

inline MetricsReport evaluate_baseline(const Dataset& ds, BaselineMethod method, int64_t k) {
    detail::MetricAccum acc;
    for (const MtsSample& s : ds.samples)
        acc.add(baseline_forecast(s, method, k), s.target, s.target_mask);
    return acc.report(ds.size());
}

}  // namespace gapcast
