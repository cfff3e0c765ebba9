#pragma once

// Training loop: masked forecasting loss, Wasserstein critic updates with
// weight clipping, alternating SGD on critic and forecaster, validation
// tracking, and a deterministic per-epoch metric log.

#include <algorithm>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "gapcast/critic.hpp"
#include "gapcast/dataset.hpp"
#include "gapcast/forecaster.hpp"
#include "gapcast/metrics.hpp"
#include "gapcast/random.hpp"
#include "gapcast/tensor.hpp"

namespace gapcast {

struct TrainConfig {
    int64_t k = 3;                    // forecast horizon
    int64_t k_prime = 3;              // generated snippet length, at most 5
    double lambda = 0.1;              // adversarial weight
    int64_t memory_slots = 32;        // L, from {8,16,32,64}
    int64_t memory_dim = 128;
    int64_t hidden = 32;
    double learning_rate = 1e-2;
    double clip_c = 0.01;
    int64_t critic_steps_per_gen = 5;
    int64_t critic_batch = 8;         // snippets per critic side per update
    int64_t epochs = 50;
    int64_t batch_size = 64;
    int64_t snippet_count = 2048;     // size of the sampled real set
    double grad_clip_norm = 5.0;      // generator gradient norm cap
    bool use_memory = true;           // false zeroes the memory readout
    uint64_t seed = 0;

    void validate() const {
        if (k < 1) op_error("config", "k must be >= 1");
        if (k_prime < 1 || k_prime > 5) op_error("config", "k_prime must lie in [1,5]");
        if (lambda < 0.0) op_error("config", "lambda must be >= 0");
        if (learning_rate < 0.0) op_error("config", "learning_rate must be >= 0");
        if (epochs < 1 || batch_size < 1) op_error("config", "epochs and batch_size must be >= 1");
        if (memory_slots < 1 || memory_dim < 1 || hidden < 1)
            op_error("config", "model dimensions must be >= 1");
    }
};

// Per-sample mean of squared residuals over observed target cells; zero when
// nothing is observed. The squares are taken after masking so masked cells
// contribute exact zeros to both the value and the gradient.
inline Tensor masked_mse(const Tensor& pred, const Tensor& truth, const Tensor& mask) {
    if (pred.shape() != truth.shape() || pred.shape() != mask.shape())
        op_error("masked_mse", "shape mismatch " + shape_str(pred.shape()) + " vs " +
                                   shape_str(truth.shape()));
    int64_t observed = 0;
    for (int64_t i = 0; i < mask.numel(); ++i)
        if (mask.at(i) == 1.0) ++observed;
    Tensor masked = elementwise_mul(sub(pred, truth), mask);
    Tensor sq = elementwise_mul(masked, masked);
    return scalar_mul(sum_all(sq), 1.0 / static_cast<double>(std::max<int64_t>(1, observed)));
}

inline Tensor total_generator_objective(const Tensor& forecast_loss, const Tensor& adv_loss,
                                        double lambda) {
    if (lambda < 0.0) op_error("objective", "lambda must be >= 0");
    return add(forecast_loss, scalar_mul(adv_loss, lambda));
}

// p <- p - lr * g for every tensor in the set.
inline void sgd_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                     double learning_rate) {
    if (params.size() != grads.size()) op_error("sgd_step", "parameter/gradient count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        if (p.shape() != g.shape())
            op_error("sgd_step", "shape mismatch " + shape_str(p.shape()) + " vs " +
                                     shape_str(g.shape()));
        for (int64_t j = 0; j < p.numel(); ++j) p.at(j) -= learning_rate * g.at(j);
    }
}

// Scale the gradient set so its global norm is at most max_norm.
inline void clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (int64_t i = 0; i < g.numel(); ++i) sq += g.at(i) * g.at(i);
    double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    double scale = max_norm / norm;
    for (Tensor& g : grads)
        for (int64_t i = 0; i < g.numel(); ++i) g.at(i) *= scale;
}

struct EpochLog {
    int64_t epoch = 0;
    double loss_forecast = 0.0;
    double loss_adv = 0.0;
    double loss_critic = 0.0;
    double val_rmse = 0.0;
    double val_mae = 0.0;

    std::string line() const {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "epoch=%lld loss_forecast=%.17g loss_adv=%.17g loss_critic=%.17g "
                      "val_rmse=%.17g val_mae=%.17g",
                      static_cast<long long>(epoch), loss_forecast, loss_adv, loss_critic,
                      val_rmse, val_mae);
        return std::string(buf);
    }
};

struct TrainResult {
    ModelParams params;       // best-validation parameters
    ModelParams final_params; // parameters after the last epoch
    CriticParams critic;
    std::vector<EpochLog> log;
    double best_val_rmse = 0.0;
    int64_t best_epoch = 0;
};

inline MetricsReport evaluate_model(ModelParams& params, const Dataset& ds, int64_t k,
                                    const ForwardOptions& opts = {}) {
    detail::MetricAccum acc;
    for (const MtsSample& s : ds.samples)
        acc.add(forecast(s, params, k, opts), s.target, s.target_mask);
    return acc.report(ds.size());
}

inline ModelParams clone_params(ModelParams& src) {
    ModelParams copy = src;
    auto src_named = src.named_tensors();
    auto dst_named = copy.named_tensors();
    for (size_t i = 0; i < src_named.size(); ++i) *dst_named[i].second = src_named[i].second->clone();
    return copy;
}

inline CriticParams clone_params(CriticParams& src) {
    CriticParams copy = src;
    auto src_named = src.named_tensors();
    auto dst_named = copy.named_tensors();
    for (size_t i = 0; i < src_named.size(); ++i) *dst_named[i].second = src_named[i].second->clone();
    return copy;
}

// Alternating optimization: per batch, the critic takes critic_steps_per_gen
// clipped updates on real snippets versus freshly generated ones, then the
// forecaster takes one step on the masked loss plus the weighted adversarial
// term. lambda = 0 skips every critic code path.
inline TrainResult train(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0) throw std::runtime_error("train: empty training set");

    int64_t d = train_set.d();
    ModelParams model =
        ModelParams::init(d, cfg.hidden, cfg.memory_slots, cfg.memory_dim, cfg.seed);
    CriticParams critic = CriticParams::init(cfg.k_prime, d, cfg.seed);

    SnippetSet real_set;
    if (cfg.lambda > 0.0) {
        real_set = sample_real_snippets(train_set, cfg.k_prime, cfg.snippet_count,
                                        mix_seed(cfg.seed, 3));
        if (real_set.snippets.empty())
            throw std::runtime_error("train: lambda > 0 but no fully observed snippets of length " +
                                     std::to_string(cfg.k_prime) + " exist");
    }

    Rng shuffle_rng(mix_seed(cfg.seed, 4));
    Rng pick_rng(mix_seed(cfg.seed, 5));
    ForwardOptions opts{cfg.use_memory};

    auto model_param_ptrs = [&] {
        std::vector<Tensor*> out;
        for (auto& [name, t] : model.named_tensors()) out.push_back(t);
        return out;
    }();
    auto critic_param_ptrs = [&] {
        std::vector<Tensor*> out;
        for (auto& [name, t] : critic.named_tensors()) out.push_back(t);
        return out;
    }();

    TrainResult result;
    result.best_val_rmse = std::numeric_limits<double>::infinity();

    std::vector<size_t> order(static_cast<size_t>(train_set.size()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double ep_loss_p = 0.0, ep_loss_a = 0.0, ep_loss_d = 0.0;
        int64_t batches = 0, critic_updates = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            int64_t bsz = static_cast<int64_t>(end - start);

            Tape gen_tape;
            Tensor loss_p_acc;
            std::vector<Tensor> fake_rows;  // graph tensors, one per sample
            for (size_t bi = start; bi < end; ++bi) {
                const MtsSample& s = train_set.samples[order[bi]];
                EncodeResult enc = forward_encode(s, model, opts);
                int64_t extra = cfg.lambda > 0.0 ? cfg.k_prime : 0;
                std::vector<Tensor> rows = rollout(enc, model, cfg.k + extra, opts);
                std::vector<Tensor> fc(rows.begin(), rows.begin() + cfg.k);
                Tensor pred = stack_rows(fc, d);
                Tensor sample_loss = masked_mse(pred, s.target, s.target_mask);
                loss_p_acc = loss_p_acc.defined() ? add(loss_p_acc, sample_loss) : sample_loss;
                if (cfg.lambda > 0.0) {
                    std::vector<Tensor> fr(rows.begin() + cfg.k, rows.end());
                    fake_rows.push_back(stack_rows(fr, d));
                }
            }
            Tensor loss_p = scalar_mul(loss_p_acc, 1.0 / static_cast<double>(bsz));

            double batch_loss_d = 0.0;
            if (cfg.lambda > 0.0) {
                // Detach current fakes for the critic updates; the forecaster
                // is fixed during these, so one generation is exact.
                std::vector<Tensor> fakes_detached;
                fakes_detached.reserve(fake_rows.size());
                for (const Tensor& f : fake_rows)
                    fakes_detached.emplace_back(f.shape(), f.values(), false);

                for (int64_t cs = 0; cs < cfg.critic_steps_per_gen; ++cs) {
                    std::vector<Tensor> reals, fakes;
                    for (int64_t i = 0; i < cfg.critic_batch; ++i) {
                        reals.push_back(real_set.snippets[static_cast<size_t>(
                            pick_rng.below(real_set.snippets.size()))]);
                        fakes.push_back(fakes_detached[static_cast<size_t>(
                            pick_rng.below(fakes_detached.size()))]);
                    }
                    Tape critic_tape;
                    Tensor loss_d = critic_loss(critic_scores(reals, critic),
                                                critic_scores(fakes, critic));
                    batch_loss_d += loss_d.scalar_value();
                    Gradients grads = critic_tape.backward(loss_d);
                    std::vector<Tensor> gvec;
                    for (Tensor* p : critic_param_ptrs) gvec.push_back(grads.of(*p));
                    sgd_step(critic_param_ptrs, gvec, cfg.learning_rate);
                    clip_weights(critic, cfg.clip_c);
                    ++critic_updates;
                }
                ep_loss_d += batch_loss_d / static_cast<double>(cfg.critic_steps_per_gen);
            }

            Tensor objective = loss_p;
            double batch_loss_a = 0.0;
            if (cfg.lambda > 0.0) {
                std::vector<Tensor> adv_fakes;
                int64_t take = std::min<int64_t>(cfg.critic_batch,
                                                 static_cast<int64_t>(fake_rows.size()));
                for (int64_t i = 0; i < take; ++i)
                    adv_fakes.push_back(
                        fake_rows[static_cast<size_t>(pick_rng.below(fake_rows.size()))]);
                Tensor loss_a = generator_adv_loss(critic_scores(adv_fakes, critic));
                batch_loss_a = loss_a.scalar_value();
                objective = total_generator_objective(loss_p, loss_a, cfg.lambda);
            }

            Gradients grads = gen_tape.backward(objective);
            std::vector<Tensor> gvec;
            for (Tensor* p : model_param_ptrs) gvec.push_back(grads.of(*p));
            clip_grad_norm(gvec, cfg.grad_clip_norm);
            sgd_step(model_param_ptrs, gvec, cfg.learning_rate);

            ep_loss_p += loss_p.scalar_value();
            ep_loss_a += batch_loss_a;
            ++batches;
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.loss_forecast = ep_loss_p / static_cast<double>(batches);
        entry.loss_adv = ep_loss_a / static_cast<double>(batches);
        entry.loss_critic = cfg.lambda > 0.0 ? ep_loss_d / static_cast<double>(batches) : 0.0;
        if (val_set.size() > 0) {
            MetricsReport val = evaluate_model(model, val_set, cfg.k, opts);
            entry.val_rmse = val.rmse;
            entry.val_mae = val.mae;
        }
        result.log.push_back(entry);

        if (val_set.size() == 0 || entry.val_rmse < result.best_val_rmse) {
            result.best_val_rmse = entry.val_rmse;
            result.best_epoch = epoch;
            result.params = clone_params(model);
        }
    }

    result.final_params = clone_params(model);
    result.critic = critic;
    return result;
}

}  // namespace gapcast
