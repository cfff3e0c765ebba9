#include <gtest/gtest.h>

#include <cmath>

#include "gapcast/experiments.hpp"
#include "gapcast/synth.hpp"
#include "gapcast/trainer.hpp"

using namespace gapcast;

namespace {

SplitResult small_splits(uint64_t seed, double missing_p = 0.3, int64_t rows = 600) {
    CsvTable table = synth_corpus(rows, 2, seed);
    Dataset raw = load_windows(table, 9, 3, 12, "synth");
    RunConfig cfg;
    cfg.missing_p = missing_p;
    cfg.train.seed = seed;
    return prepare_splits(raw, cfg);
}

TrainConfig small_config(uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.memory_slots = 4;
    cfg.memory_dim = 8;
    cfg.hidden = 8;
    cfg.critic_batch = 4;
    cfg.snippet_count = 64;
    cfg.seed = seed;
    return cfg;
}

bool tensors_equal(Tensor& a, Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a.at(i) != b.at(i)) return false;
    return true;
}

}  // namespace

TEST(MaskedMse, SpecValues) {
    Tensor pred({1, 2}, {1, 3});
    Tensor truth({1, 2}, {2, 1});
    Tensor mask({1, 2}, {1, 0});
    EXPECT_DOUBLE_EQ(masked_mse(pred, truth, mask).at(0), 1.0);

    Tensor zero_mask = Tensor::zeros({1, 2});
    EXPECT_DOUBLE_EQ(masked_mse(pred, truth, zero_mask).at(0), 0.0);

    EXPECT_DOUBLE_EQ(masked_mse(pred, pred, mask).at(0), 0.0);
}

TEST(MaskedMse, InsensitiveToMaskedCells) {
    Rng rng(3);
    Tensor truth = rng.uniform_tensor({3, 2}, -1, 1, false);
    Tensor mask({3, 2}, {1, 0, 0, 1, 1, 0});
    ModelParams p = ModelParams::init(2, 4, 4, 6, 7);
    MtsSample s;
    s.history = rng.uniform_tensor({4, 2}, -1, 1, false);
    s.history_mask = Tensor::full({4, 2}, 1.0);
    s.target = truth;
    s.target_mask = mask;

    auto loss_and_grads = [&](const Tensor& target) {
        Tape tape;
        Tensor pred = forecast(s, p, 3);
        Tensor loss = masked_mse(pred, target, mask);
        Gradients g = tape.backward(loss);
        std::vector<Tensor> grads;
        for (auto& [name, t] : p.named_tensors()) grads.push_back(g.of(*t));
        return std::make_pair(loss.at(0), grads);
    };

    Tensor perturbed = truth.clone();
    for (int64_t i = 0; i < mask.numel(); ++i)
        if (mask.at(i) == 0.0) perturbed.at(i) += (i % 2 == 0) ? 1e6 : -1e6;

    auto [base_loss, base_grads] = loss_and_grads(truth);
    auto [pert_loss, pert_grads] = loss_and_grads(perturbed);
    EXPECT_EQ(base_loss, pert_loss);  // bitwise
    for (size_t gi = 0; gi < base_grads.size(); ++gi)
        for (int64_t i = 0; i < base_grads[gi].numel(); ++i)
            EXPECT_LT(std::fabs(base_grads[gi].at(i) - pert_grads[gi].at(i)), 1e-12);
}

TEST(Objective, LambdaWeighting) {
    Tensor lp = Tensor::scalar(0.5);
    Tensor la = Tensor::scalar(-0.2);
    EXPECT_DOUBLE_EQ(total_generator_objective(lp, la, 1.0).at(0), 0.3);
    EXPECT_DOUBLE_EQ(total_generator_objective(lp, la, 0.0).at(0), 0.5);
    EXPECT_NEAR(total_generator_objective(lp, la, 0.1).at(0), 0.48, 1e-15);
}

TEST(SgdStep, Basics) {
    Tensor p = Tensor::scalar(1.0, true);
    Tensor g = Tensor::scalar(2.0);
    std::vector<Tensor*> params{&p};
    sgd_step(params, {g}, 0.1);
    EXPECT_DOUBLE_EQ(p.at(0), 0.8);

    sgd_step(params, {Tensor::scalar(0.0)}, 0.1);  // zero grad
    EXPECT_DOUBLE_EQ(p.at(0), 0.8);

    sgd_step(params, {g}, 0.0);  // lr = 0 is a no-op
    EXPECT_DOUBLE_EQ(p.at(0), 0.8);

    Tensor bad({2}, {1, 1});
    EXPECT_THROW(sgd_step(params, {bad}, 0.1), std::invalid_argument);
}

TEST(ClipGradNorm, ScalesOnlyAboveCap) {
    std::vector<Tensor> grads{Tensor({2}, {3.0, 4.0})};
    clip_grad_norm(grads, 10.0);
    EXPECT_DOUBLE_EQ(grads[0].at(0), 3.0);
    clip_grad_norm(grads, 2.5);
    EXPECT_NEAR(std::hypot(grads[0].at(0), grads[0].at(1)), 2.5, 1e-12);
}

TEST(Train, ZeroLearningRateLeavesParams) {
    SplitResult splits = small_splits(5);
    TrainConfig cfg = small_config(5);
    cfg.lambda = 0.0;
    cfg.epochs = 1;
    cfg.learning_rate = 0.0;
    TrainResult res = train(splits.train, splits.validation, cfg);
    ModelParams fresh = ModelParams::init(splits.train.d(), cfg.hidden, cfg.memory_slots,
                                          cfg.memory_dim, cfg.seed);
    auto a = res.final_params.named_tensors();
    auto b = fresh.named_tensors();
    for (size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(tensors_equal(*a[i].second, *b[i].second));
    ASSERT_EQ(res.log.size(), 1u);
    EXPECT_GT(res.log[0].loss_forecast, 0.0);
}

TEST(Train, DeterministicLogs) {
    SplitResult splits = small_splits(7);
    TrainConfig cfg = small_config(7);
    TrainResult r1 = train(splits.train, splits.validation, cfg);
    TrainResult r2 = train(splits.train, splits.validation, cfg);
    ASSERT_EQ(r1.log.size(), r2.log.size());
    for (size_t i = 0; i < r1.log.size(); ++i) EXPECT_EQ(r1.log[i].line(), r2.log[i].line());
}

TEST(Train, LambdaZeroNeverTouchesCritic) {
    SplitResult splits = small_splits(9);
    TrainConfig cfg = small_config(9);
    cfg.lambda = 0.0;
    TrainResult res = train(splits.train, splits.validation, cfg);
    CriticParams fresh = CriticParams::init(cfg.k_prime, splits.train.d(), cfg.seed);
    auto a = res.critic.named_tensors();
    auto b = fresh.named_tensors();
    for (size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(tensors_equal(*a[i].second, *b[i].second));
}

TEST(Train, CriticObeysClipAfterTraining) {
    SplitResult splits = small_splits(11);
    TrainConfig cfg = small_config(11);
    cfg.epochs = 1;
    TrainResult res = train(splits.train, splits.validation, cfg);
    for (auto& [name, t] : res.critic.named_tensors())
        for (int64_t i = 0; i < t->numel(); ++i) EXPECT_LE(std::fabs(t->at(i)), cfg.clip_c);
}

TEST(Train, ValidationLossImprovesOnEasyTask) {
    SplitResult splits = small_splits(13, 0.2, 1200);
    TrainConfig cfg = small_config(13);
    cfg.lambda = 0.0;
    cfg.epochs = 6;
    cfg.learning_rate = 0.05;
    TrainResult res = train(splits.train, splits.validation, cfg);
    EXPECT_LT(res.log.back().val_rmse, res.log.front().val_rmse);
}

TEST(GradientFlow, AllParameterGroupsReachable) {
    // one generator objective with lambda > 0; decay params nudged off the
    // rectifier hinge where their gradient is exactly zero by convention
    SplitResult splits = small_splits(15);
    TrainConfig cfg = small_config(15);
    ModelParams model = ModelParams::init(splits.train.d(), cfg.hidden, cfg.memory_slots,
                                          cfg.memory_dim, cfg.seed);
    for (Tensor* t : {&model.decay_fwd.w, &model.decay_fwd.b, &model.decay_bwd.w,
                      &model.decay_bwd.b})
        for (int64_t i = 0; i < t->numel(); ++i) t->at(i) = 0.1;
    CriticParams critic = CriticParams::init(cfg.k_prime, splits.train.d(), cfg.seed);

    Tape tape;
    Tensor loss_p_acc;
    std::vector<Tensor> fakes;
    for (int64_t si = 0; si < 8; ++si) {
        const MtsSample& s = splits.train.samples[static_cast<size_t>(si)];
        EncodeResult enc = forward_encode(s, model);
        std::vector<Tensor> rows = rollout(enc, model, cfg.k + cfg.k_prime);
        std::vector<Tensor> fc(rows.begin(), rows.begin() + cfg.k);
        Tensor loss = masked_mse(stack_rows(fc, 2), s.target, s.target_mask);
        loss_p_acc = loss_p_acc.defined() ? add(loss_p_acc, loss) : loss;
        std::vector<Tensor> fr(rows.begin() + cfg.k, rows.end());
        fakes.push_back(stack_rows(fr, 2));
    }
    Tensor obj = total_generator_objective(scalar_mul(loss_p_acc, 1.0 / 8.0),
                                           generator_adv_loss(critic_scores(fakes, critic)),
                                           cfg.lambda);
    Gradients grads = tape.backward(obj);

    auto nonzero_somewhere = [&](Tensor& t) {
        Tensor g = grads.of(t);
        for (int64_t i = 0; i < g.numel(); ++i)
            if (g.at(i) != 0.0) return true;
        return false;
    };
    EXPECT_TRUE(nonzero_somewhere(model.lstm.input_w));
    EXPECT_TRUE(nonzero_somewhere(model.lstm.forget_u));
    EXPECT_TRUE(nonzero_somewhere(model.lstm.cand_w));
    EXPECT_TRUE(nonzero_somewhere(model.lstm.proj_w));
    EXPECT_TRUE(nonzero_somewhere(model.lstm.proj_b));
    EXPECT_TRUE(nonzero_somewhere(model.decay_fwd.w));
    EXPECT_TRUE(nonzero_somewhere(model.decay_fwd.b));
    EXPECT_TRUE(nonzero_somewhere(model.decay_bwd.w));
    EXPECT_TRUE(nonzero_somewhere(model.memory.query_w));
    EXPECT_TRUE(nonzero_somewhere(model.memory.query_b));
    EXPECT_TRUE(nonzero_somewhere(model.memory.bank));
    EXPECT_TRUE(nonzero_somewhere(model.memory.readout_w));
}

TEST(Ablation, VariantsShareDataAndDifferOnlyInSwitch) {
    CsvTable table = synth_corpus(600, 2, 17);
    Dataset raw = load_windows(table, 9, 3, 12, "synth");
    RunConfig cfg;
    cfg.missing_p = 0.3;
    cfg.train = small_config(17);
    cfg.train.epochs = 1;
    auto rows = run_ablation(raw, cfg, {"full", "no_memory", "no_adversarial"});
    ASSERT_EQ(rows.size(), 3u);

    // no_adversarial leaves the critic at its init
    CriticParams fresh = CriticParams::init(cfg.train.k_prime, 2, cfg.train.seed);
    auto na = rows[2].outcome.critic.named_tensors();
    auto fr = fresh.named_tensors();
    for (size_t i = 0; i < na.size(); ++i) EXPECT_TRUE(tensors_equal(*na[i].second, *fr[i].second));

    // no_memory leaves the memory bank at its init (zero gradient path)
    ModelParams fresh_model = ModelParams::init(2, cfg.train.hidden, cfg.train.memory_slots,
                                                cfg.train.memory_dim, cfg.train.seed);
    EXPECT_TRUE(tensors_equal(rows[1].outcome.final_params.memory.bank, fresh_model.memory.bank));
    EXPECT_TRUE(
        tensors_equal(rows[1].outcome.final_params.memory.query_w, fresh_model.memory.query_w));
    // but its LSTM did move
    EXPECT_FALSE(
        tensors_equal(rows[1].outcome.final_params.lstm.input_w, fresh_model.lstm.input_w));

    EXPECT_THROW(variant_config(cfg.train, "bogus"), std::runtime_error);
}

TEST(Baselines, SpecExamples) {
    // constant fully observed series: both baselines repeat the constant
    MtsSample s;
    s.history = Tensor::full({4, 1}, 3.5);
    s.history_mask = Tensor::full({4, 1}, 1.0);
    s.target = Tensor::full({2, 1}, 3.5);
    s.target_mask = Tensor::full({2, 1}, 1.0);
    for (BaselineMethod m : {BaselineMethod::carry_forward, BaselineMethod::empirical_mean}) {
        Tensor f = baseline_forecast(s, m, 2);
        for (int64_t i = 0; i < f.numel(); ++i) EXPECT_DOUBLE_EQ(f.at(i), 3.5);
    }

    // all-missing variable forecasts 0
    MtsSample sm;
    sm.history = Tensor::zeros({3, 1});
    sm.history_mask = Tensor::zeros({3, 1});
    sm.target = Tensor::zeros({1, 1});
    sm.target_mask = Tensor::full({1, 1}, 1.0);
    EXPECT_DOUBLE_EQ(baseline_forecast(sm, BaselineMethod::carry_forward, 1).at(0), 0.0);

    // carry_forward repeats the last observed value through trailing misses
    MtsSample sc;
    sc.history = Tensor({3, 1}, {1.0, 7.0, 0.0});
    sc.history_mask = Tensor({3, 1}, {1.0, 1.0, 0.0});
    sc.target = Tensor::zeros({2, 1});
    sc.target_mask = Tensor::full({2, 1}, 1.0);
    Tensor f = baseline_forecast(sc, BaselineMethod::carry_forward, 2);
    EXPECT_DOUBLE_EQ(f.at(0), 7.0);
    EXPECT_DOUBLE_EQ(f.at(1), 7.0);
}

TEST(Metrics, SpecExamples) {
    Tensor truth({2, 1}, {0.0, 0.0});
    Tensor mask = Tensor::full({2, 1}, 1.0);
    EXPECT_DOUBLE_EQ(rmse({truth}, {truth}, {mask}), 0.0);
    EXPECT_DOUBLE_EQ(mae({truth}, {truth}, {mask}), 0.0);

    Tensor pred({2, 1}, {1.0, -1.0});
    EXPECT_DOUBLE_EQ(rmse({pred}, {truth}, {mask}), 1.0);
    EXPECT_DOUBLE_EQ(mae({pred}, {truth}, {mask}), 1.0);

    Tensor single({1, 1}, {3.0});
    Tensor zt({1, 1}, {0.0});
    Tensor zm = Tensor::full({1, 1}, 1.0);
    EXPECT_DOUBLE_EQ(rmse({single}, {zt}, {zm}), 3.0);

    Tensor p13({2, 1}, {1.0, 3.0});
    EXPECT_DOUBLE_EQ(mae({p13}, {truth}, {mask}), 2.0);

    // zero observed cells rejected
    Tensor nomask = Tensor::zeros({2, 1});
    EXPECT_THROW(rmse({pred}, {truth}, {nomask}), std::invalid_argument);

    // internal consistency: rmse^2 * cells == sum of squared masked errors
    Rng rng(23);
    std::vector<Tensor> preds, truths, masks;
    double sq = 0.0;
    int64_t cells = 0;
    for (int i = 0; i < 5; ++i) {
        preds.push_back(rng.uniform_tensor({3, 2}, -1, 1, false));
        truths.push_back(rng.uniform_tensor({3, 2}, -1, 1, false));
        Tensor m = Tensor::zeros({3, 2});
        for (int64_t j = 0; j < 6; ++j) m.at(j) = rng.uniform01() < 0.7 ? 1.0 : 0.0;
        masks.push_back(m);
        for (int64_t j = 0; j < 6; ++j)
            if (m.at(j) == 1.0) {
                double e = preds.back().at(j) - truths.back().at(j);
                sq += e * e;
                ++cells;
            }
    }
    double r = rmse(preds, truths, masks);
    EXPECT_NEAR(r * r * static_cast<double>(cells), sq, 1e-9);

    // order invariance
    std::vector<Tensor> rp(preds.rbegin(), preds.rend());
    std::vector<Tensor> rt(truths.rbegin(), truths.rend());
    std::vector<Tensor> rm(masks.rbegin(), masks.rend());
    EXPECT_DOUBLE_EQ(rmse(rp, rt, rm), r);
}
