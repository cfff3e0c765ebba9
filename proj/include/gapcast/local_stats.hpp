#pragma once

// Per-sample local statistic features. The gap indicator, running mean and
// carried-forward last value depend only on the data and are plain constants;
// the decay weights and the resulting local estimates differentiate through
// the per-variable decay parameters.

#include "gapcast/tensor.hpp"

namespace gapcast {

// Trainable per-variable decay parameters. Initialized to zero so the decay
// starts at 1 (full trust in the last observation).
struct DecayParams {
    Tensor w;  // d
    Tensor b;  // d

    static DecayParams zeros(int64_t d) {
        return DecayParams{Tensor::zeros({d}, true), Tensor::zeros({d}, true)};
    }
};

struct LocalStats {
    Tensor delta;       // n x d, steps since the variable was last observed
    Tensor gamma;       // n x d in (0,1], differentiable
    Tensor emp_mean;    // n x d running mean of the observed prefix
    Tensor last_obs;    // n x d carried-forward last observation
    Tensor z_forward;   // n x d local estimate, differentiable
    Tensor z_backward;  // n x d reverse-time local estimate, differentiable
};

inline Tensor reverse_rows(const Tensor& t) {
    Tensor out = Tensor::zeros(t.shape());
    int64_t n = t.dim(0), d = t.dim(1);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out.at(i, j) = t.at(n - 1 - i, j);
    return out;
}

// delta[0][j] = 0; delta[i][j] = 0 when observed, else delta[i-1][j] + 1.
inline Tensor compute_delta(const Tensor& mask) {
    if (mask.rank() != 2) op_error("compute_delta", "mask must be 2-D");
    int64_t n = mask.dim(0), d = mask.dim(1);
    Tensor delta = Tensor::zeros({n, d});
    for (int64_t j = 0; j < d; ++j) {
        for (int64_t i = 1; i < n; ++i) {
            if (mask.at(i, j) == 0.0) delta.at(i, j) = delta.at(i - 1, j) + 1.0;
        }
    }
    return delta;
}

// Mean of the observed strict prefix; 0 when the prefix holds nothing.
inline Tensor compute_empirical_mean(const Tensor& x, const Tensor& m) {
    if (x.shape() != m.shape()) op_error("compute_empirical_mean", "shape mismatch");
    int64_t n = x.dim(0), d = x.dim(1);
    Tensor out = Tensor::zeros({n, d});
    for (int64_t j = 0; j < d; ++j) {
        double sum = 0.0;
        int64_t count = 0;
        for (int64_t i = 0; i < n; ++i) {
            out.at(i, j) = count > 0 ? sum / static_cast<double>(count) : 0.0;
            if (m.at(i, j) == 1.0) {
                sum += x.at(i, j);
                ++count;
            }
        }
    }
    return out;
}

// Most recent observed value strictly before each step; 0 until the first
// observation.
inline Tensor compute_last_observation(const Tensor& x, const Tensor& m) {
    if (x.shape() != m.shape()) op_error("compute_last_observation", "shape mismatch");
    int64_t n = x.dim(0), d = x.dim(1);
    Tensor out = Tensor::zeros({n, d});
    for (int64_t j = 0; j < d; ++j) {
        double last = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            out.at(i, j) = last;
            if (m.at(i, j) == 1.0) last = x.at(i, j);
        }
    }
    return out;
}

// gamma = exp(-max(0, w_j * delta_ij + b_j)), differentiable in w and b.
inline Tensor compute_decay(const Tensor& delta, const Tensor& w, const Tensor& b) {
    int64_t n = delta.dim(0), d = delta.dim(1);
    if (w.shape() != Shape{d} || b.shape() != Shape{d})
        op_error("compute_decay", "decay parameters must have length d=" + std::to_string(d));
    Tensor ones_col = Tensor::full({n, 1}, 1.0);
    Tensor w_rows = matmul(ones_col, reshape(w, {1, d}));
    Tensor inner = add(elementwise_mul(delta, w_rows), b);
    return exp(scalar_mul(relu(inner), -1.0));
}

// z = m*x + (1-m) * (gamma * last_obs + (1-gamma) * emp_mean)
inline Tensor compute_local_estimate(const Tensor& x, const Tensor& m, const Tensor& gamma,
                                     const Tensor& last_obs, const Tensor& emp_mean) {
    Tensor ones = Tensor::full(x.shape(), 1.0);
    Tensor blend = add(elementwise_mul(gamma, last_obs),
                       elementwise_mul(sub(ones, gamma), emp_mean));
    return add(elementwise_mul(m, x), elementwise_mul(sub(ones, m), blend));
}

// Reverse-time local estimate: statistics of the suffix i+1..n, laid out in
// the original orientation. The row reversals touch only constants, so the
// estimate itself stays differentiable in (w, b).
inline Tensor compute_backward_stats(const Tensor& x, const Tensor& m, const Tensor& w,
                                     const Tensor& b) {
    Tensor xr = reverse_rows(x);
    Tensor mr = reverse_rows(m);
    Tensor delta_b = reverse_rows(compute_delta(mr));
    Tensor mean_b = reverse_rows(compute_empirical_mean(xr, mr));
    Tensor last_b = reverse_rows(compute_last_observation(xr, mr));
    Tensor gamma_b = compute_decay(delta_b, w, b);
    return compute_local_estimate(x, m, gamma_b, last_b, mean_b);
}

inline LocalStats compute_local_stats(const Tensor& x, const Tensor& m, const DecayParams& fwd,
                                      const DecayParams& bwd) {
    LocalStats s;
    s.delta = compute_delta(m);
    s.emp_mean = compute_empirical_mean(x, m);
    s.last_obs = compute_last_observation(x, m);
    s.gamma = compute_decay(s.delta, fwd.w, fwd.b);
    s.z_forward = compute_local_estimate(x, m, s.gamma, s.last_obs, s.emp_mean);
    s.z_backward = compute_backward_stats(x, m, bwd.w, bwd.b);
    return s;
}

// Constant context carried past the end of the history, used while rolling
// the forecast forward: rolled-out steps count as unobserved, so the gap
// keeps growing while the mean and last value stay frozen.
struct ContinuationStats {
    Tensor last_delta;  // d, gap indicator at the final history row
    Tensor last_obs;    // d, last observed value over the whole history
    Tensor emp_mean;    // d, mean over all observed history cells
};

inline ContinuationStats continuation_stats(const Tensor& x, const Tensor& m) {
    int64_t n = x.dim(0), d = x.dim(1);
    ContinuationStats c;
    c.last_delta = Tensor::zeros({d});
    c.last_obs = Tensor::zeros({d});
    c.emp_mean = Tensor::zeros({d});
    Tensor delta = compute_delta(m);
    for (int64_t j = 0; j < d; ++j) {
        c.last_delta.at(j) = delta.at(n - 1, j);
        double sum = 0.0, last = 0.0;
        int64_t count = 0;
        for (int64_t i = 0; i < n; ++i) {
            if (m.at(i, j) == 1.0) {
                last = x.at(i, j);
                sum += x.at(i, j);
                ++count;
            }
        }
        c.last_obs.at(j) = last;
        c.emp_mean.at(j) = count > 0 ? sum / static_cast<double>(count) : 0.0;
    }
    return c;
}

}  // namespace gapcast
