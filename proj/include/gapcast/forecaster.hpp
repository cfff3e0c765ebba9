#pragma once

// Recurrent forecaster: LSTM cell, output projection, four-way input fusion,
// and the autoregressive rollout that produces both the forecast window and
// the extra generated steps scored by the critic.

#include <string>
#include <utility>
#include <vector>

#include "gapcast/dataset.hpp"
#include "gapcast/local_stats.hpp"
#include "gapcast/memory.hpp"
#include "gapcast/random.hpp"
#include "gapcast/tensor.hpp"

namespace gapcast {

struct LstmParams {
    // gate weights: input x (d x h), recurrent h (h x h), bias (h)
    Tensor input_w, input_u, input_b;
    Tensor forget_w, forget_u, forget_b;
    Tensor output_w, output_u, output_b;
    Tensor cand_w, cand_u;  // candidate cell carries no bias term
    Tensor proj_w;          // h x d output projection
    Tensor proj_b;          // d

    static LstmParams init(int64_t d, int64_t h, Rng& rng) {
        LstmParams p;
        p.input_w = rng.glorot({d, h}, d, h);
        p.forget_w = rng.glorot({d, h}, d, h);
        p.output_w = rng.glorot({d, h}, d, h);
        p.cand_w = rng.glorot({d, h}, d, h);
        p.input_u = rng.glorot({h, h}, h, h);
        p.forget_u = rng.glorot({h, h}, h, h);
        p.output_u = rng.glorot({h, h}, h, h);
        p.cand_u = rng.glorot({h, h}, h, h);
        p.input_b = Tensor::zeros({h}, true);
        p.forget_b = Tensor::zeros({h}, true);
        p.output_b = Tensor::zeros({h}, true);
        p.proj_w = rng.glorot({h, d}, h, d);
        p.proj_b = Tensor::zeros({d}, true);
        return p;
    }
};

struct RecurrentState {
    Tensor h;
    Tensor c;

    static RecurrentState zero(int64_t hidden) {
        return RecurrentState{Tensor::zeros({hidden}), Tensor::zeros({hidden})};
    }
};

struct ModelParams {
    int64_t d = 0;
    int64_t hidden = 0;
    LstmParams lstm;
    DecayParams decay_fwd;
    DecayParams decay_bwd;
    MemoryBank memory;

    static ModelParams init(int64_t d, int64_t hidden, int64_t slots, int64_t slot_dim,
                            uint64_t seed) {
        Rng rng(mix_seed(seed, 0x1217));
        ModelParams p;
        p.d = d;
        p.hidden = hidden;
        p.lstm = LstmParams::init(d, hidden, rng);
        p.decay_fwd = DecayParams::zeros(d);
        p.decay_bwd = DecayParams::zeros(d);
        p.memory = MemoryBank::init(slots, slot_dim, d, rng);
        return p;
    }

    // Stable name/tensor listing shared by the optimizer and the checkpoint.
    std::vector<std::pair<std::string, Tensor*>> named_tensors() {
        return {
            {"lstm/input_w", &lstm.input_w},   {"lstm/input_u", &lstm.input_u},
            {"lstm/input_b", &lstm.input_b},   {"lstm/forget_w", &lstm.forget_w},
            {"lstm/forget_u", &lstm.forget_u}, {"lstm/forget_b", &lstm.forget_b},
            {"lstm/output_w", &lstm.output_w}, {"lstm/output_u", &lstm.output_u},
            {"lstm/output_b", &lstm.output_b}, {"lstm/cand_w", &lstm.cand_w},
            {"lstm/cand_u", &lstm.cand_u},     {"lstm/proj_w", &lstm.proj_w},
            {"lstm/proj_b", &lstm.proj_b},     {"decay_fwd/w", &decay_fwd.w},
            {"decay_fwd/b", &decay_fwd.b},     {"decay_bwd/w", &decay_bwd.w},
            {"decay_bwd/b", &decay_bwd.b},     {"memory/bank", &memory.bank},
            {"memory/query_w", &memory.query_w}, {"memory/query_b", &memory.query_b},
            {"memory/readout_w", &memory.readout_w},
        };
    }

    std::vector<Tensor> trainable() {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_tensors()) out.push_back(*t);
        return out;
    }
};

inline RecurrentState lstm_step(const Tensor& input, const RecurrentState& state,
                                const LstmParams& p) {
    Tensor gi = sigmoid(add(add(matmul(input, p.input_w), matmul(state.h, p.input_u)), p.input_b));
    Tensor gf = sigmoid(add(add(matmul(input, p.forget_w), matmul(state.h, p.forget_u)), p.forget_b));
    Tensor go = sigmoid(add(add(matmul(input, p.output_w), matmul(state.h, p.output_u)), p.output_b));
    Tensor cand = tanh(add(matmul(input, p.cand_w), matmul(state.h, p.cand_u)));
    Tensor c = add(elementwise_mul(gf, state.c), elementwise_mul(gi, cand));
    Tensor h = elementwise_mul(tanh(c), go);
    return RecurrentState{std::move(h), std::move(c)};
}

inline Tensor project_output(const Tensor& h, const LstmParams& p) {
    return add(matmul(h, p.proj_w), p.proj_b);
}

// Mean of the four components with a fixed denominator of 4; components
// flagged unavailable enter as zero vectors.
inline Tensor fuse_inputs(const Tensor& z, const Tensor& z_backward, const Tensor& model_estimate,
                          const Tensor& readout_proj, const std::array<bool, 4>& available) {
    const Tensor* parts[4] = {&z, &z_backward, &model_estimate, &readout_proj};
    Shape shape;
    for (int i = 0; i < 4; ++i)
        if (available[static_cast<size_t>(i)]) shape = parts[i]->shape();
    if (shape.empty()) op_error("fuse_inputs", "no component available");
    Tensor zero;
    Tensor acc;
    for (int i = 0; i < 4; ++i) {
        Tensor part;
        if (available[static_cast<size_t>(i)]) {
            part = *parts[i];
        } else {
            if (!zero.defined()) zero = Tensor::zeros(shape);
            part = zero;
        }
        acc = acc.defined() ? add(acc, part) : part;
    }
    return scalar_mul(acc, 0.25);
}

struct ForwardOptions {
    bool use_memory = true;  // when false the memory readout is zeroed
};

struct EncodeResult {
    RecurrentState state;
    std::vector<Tensor> model_estimates;  // per-step model estimate, each length d
    std::vector<Tensor> fused_inputs;     // per-step LSTM input, each length d
    LocalStats stats;
    ContinuationStats continuation;
};

inline Tensor sample_row(const Tensor& matrix, int64_t row) {
    return reshape(slice(matrix, row, 1), {matrix.dim(1)});
}

// Iterate the history: estimate from the previous state, query the memory,
// fuse, then advance the cell.
inline EncodeResult forward_encode(const MtsSample& sample, ModelParams& params,
                                   const ForwardOptions& opts = {}) {
    EncodeResult res;
    res.stats = compute_local_stats(sample.history, sample.history_mask, params.decay_fwd,
                                    params.decay_bwd);
    res.continuation = continuation_stats(sample.history, sample.history_mask);
    res.state = RecurrentState::zero(params.hidden);
    int64_t n = sample.n();
    for (int64_t t = 0; t < n; ++t) {
        Tensor estimate = project_output(res.state.h, params.lstm);
        Tensor z = sample_row(res.stats.z_forward, t);
        Tensor zb = sample_row(res.stats.z_backward, t);
        Tensor readout_proj;
        if (opts.use_memory) {
            Tensor query = build_query(z, zb, estimate, params.memory);
            Attention att = attend(params.memory, query);
            readout_proj = project_readout(params.memory, att.readout);
        }
        Tensor fused = fuse_inputs(z, zb, estimate, readout_proj,
                                   {true, true, true, opts.use_memory});
        res.state = lstm_step(fused, res.state, params.lstm);
        res.model_estimates.push_back(std::move(estimate));
        res.fused_inputs.push_back(std::move(fused));
    }
    return res;
}

// Continue the recurrence past the history for `steps` steps. Every rolled
// step counts as unobserved: the gap indicator keeps growing, the frozen
// history mean/last value feed the local estimate, and no reverse-time
// statistics exist.
inline std::vector<Tensor> rollout(const EncodeResult& encoded, ModelParams& params, int64_t steps,
                                   const ForwardOptions& opts = {}) {
    std::vector<Tensor> rows;
    RecurrentState state = encoded.state;
    const ContinuationStats& cont = encoded.continuation;
    int64_t d = params.d;
    Tensor ones = Tensor::full({d}, 1.0);
    for (int64_t s = 1; s <= steps; ++s) {
        Tensor estimate = project_output(state.h, params.lstm);
        Tensor delta = Tensor::zeros({1, d});
        for (int64_t j = 0; j < d; ++j)
            delta.at(0, j) = cont.last_delta.at(j) + static_cast<double>(s);
        Tensor gamma = reshape(compute_decay(delta, params.decay_fwd.w, params.decay_fwd.b), {d});
        Tensor z = add(elementwise_mul(gamma, cont.last_obs),
                       elementwise_mul(sub(ones, gamma), cont.emp_mean));
        Tensor readout_proj;
        if (opts.use_memory) {
            Tensor zb_zero = Tensor::zeros({d});
            Tensor query = build_query(z, zb_zero, estimate, params.memory);
            Attention att = attend(params.memory, query);
            readout_proj = project_readout(params.memory, att.readout);
        }
        Tensor fused = fuse_inputs(z, Tensor(), estimate, readout_proj,
                                   {true, false, true, opts.use_memory});
        state = lstm_step(fused, state, params.lstm);
        rows.push_back(std::move(estimate));
    }
    return rows;
}

// Stack length-d rows into a (rows x d) matrix on the tape.
inline Tensor stack_rows(const std::vector<Tensor>& rows, int64_t d) {
    if (rows.empty()) op_error("stack_rows", "no rows");
    Tensor flat = concat_cols(rows);
    return reshape(flat, {static_cast<int64_t>(rows.size()), d});
}

// Forecast the k steps after the history.
inline Tensor forecast(const MtsSample& sample, ModelParams& params, int64_t k,
                       const ForwardOptions& opts = {}) {
    EncodeResult enc = forward_encode(sample, params, opts);
    std::vector<Tensor> rows = rollout(enc, params, k, opts);
    return stack_rows(rows, params.d);
}

// The k' generated rows beyond the forecast window, gradients intact.
inline Tensor generate_fake(const MtsSample& sample, ModelParams& params, int64_t k,
                            int64_t k_prime, const ForwardOptions& opts = {}) {
    EncodeResult enc = forward_encode(sample, params, opts);
    std::vector<Tensor> rows = rollout(enc, params, k + k_prime, opts);
    rows.erase(rows.begin(), rows.begin() + k);
    return stack_rows(rows, params.d);
}

}  // namespace gapcast
