#pragma once

// Convolutional critic scoring snippet realism, plus the Wasserstein losses
// and the weight clipping that keeps the critic Lipschitz.

#include <vector>

#include "gapcast/random.hpp"
#include "gapcast/tensor.hpp"

namespace gapcast {

inline constexpr double kCriticLeakySlope = 0.2;

struct CriticParams {
    Tensor conv1_k;  // 64 x 1 x 3 x 3
    Tensor conv1_b;  // 64
    Tensor conv2_k;  // 128 x 64 x 3 x 3
    Tensor conv2_b;  // 128
    Tensor fc1_w;    // (128 * k' * d) x 1024
    Tensor fc1_b;    // 1024
    Tensor fc2_w;    // 1024 x 1
    Tensor fc2_b;    // 1
    int64_t rows = 0;  // k'
    int64_t cols = 0;  // d

    static CriticParams init(int64_t rows, int64_t cols, uint64_t seed) {
        Rng rng(mix_seed(seed, 0xD15C));
        CriticParams p;
        p.rows = rows;
        p.cols = cols;
        p.conv1_k = rng.glorot({64, 1, 3, 3}, 1 * 9, 64 * 9);
        p.conv1_b = Tensor::zeros({64}, true);
        p.conv2_k = rng.glorot({128, 64, 3, 3}, 64 * 9, 128 * 9);
        p.conv2_b = Tensor::zeros({128}, true);
        int64_t flat = 128 * rows * cols;  // conv output width depends on the snippet shape
        p.fc1_w = rng.glorot({flat, 1024}, flat, 1024);
        p.fc1_b = Tensor::zeros({1024}, true);
        p.fc2_w = rng.glorot({1024, 1}, 1024, 1);
        p.fc2_b = Tensor::zeros({1}, true);
        return p;
    }

    std::vector<std::pair<std::string, Tensor*>> named_tensors() {
        return {{"critic/conv1_k", &conv1_k}, {"critic/conv1_b", &conv1_b},
                {"critic/conv2_k", &conv2_k}, {"critic/conv2_b", &conv2_b},
                {"critic/fc1_w", &fc1_w},     {"critic/fc1_b", &fc1_b},
                {"critic/fc2_w", &fc2_w},     {"critic/fc2_b", &fc2_b}};
    }

    std::vector<Tensor> trainable() {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_tensors()) out.push_back(*t);
        return out;
    }
};

// Scores for a batch of k' x d snippets. Convolutions run per snippet; the
// flattened features are stacked so the fully connected layers see one matrix
// per batch rather than one matvec per snippet.
inline Tensor critic_scores(const std::vector<Tensor>& snippets, const CriticParams& p) {
    if (snippets.empty()) op_error("critic_scores", "empty snippet batch");
    int64_t flat = 128 * p.rows * p.cols;
    std::vector<Tensor> features;
    features.reserve(snippets.size());
    for (const Tensor& snip : snippets) {
        if (snip.shape() != Shape{p.rows, p.cols})
            op_error("discriminate", "snippet " + shape_str(snip.shape()) +
                                         " does not match critic input " +
                                         shape_str({p.rows, p.cols}));
        Tensor img = reshape(snip, {1, p.rows, p.cols});
        Tensor c1 = leaky_relu(conv2d(img, p.conv1_k, p.conv1_b), kCriticLeakySlope);
        Tensor c2 = leaky_relu(conv2d(c1, p.conv2_k, p.conv2_b), kCriticLeakySlope);
        features.push_back(reshape(c2, {flat}));
    }
    int64_t batch = static_cast<int64_t>(snippets.size());
    Tensor stacked = reshape(concat_cols(features), {batch, flat});
    Tensor h = leaky_relu(add(matmul(stacked, p.fc1_w), p.fc1_b), kCriticLeakySlope);
    Tensor out = add(matmul(h, p.fc2_w), p.fc2_b);  // batch x 1
    return reshape(out, {batch});
}

// Unbounded realism score for one snippet; higher means more real.
inline Tensor discriminate(const Tensor& snippet, const CriticParams& p) {
    return reshape(critic_scores({snippet}, p), {1});
}

// -mean(real) + mean(fake)
inline Tensor critic_loss(const Tensor& real_scores, const Tensor& fake_scores) {
    if (!real_scores.defined() || !fake_scores.defined() || real_scores.numel() == 0 ||
        fake_scores.numel() == 0)
        op_error("critic_loss", "empty score list");
    return add(scalar_mul(mean_all(real_scores), -1.0), mean_all(fake_scores));
}

// -mean(fake); pushes the generator toward snippets the critic rates real.
inline Tensor generator_adv_loss(const Tensor& fake_scores) {
    if (!fake_scores.defined() || fake_scores.numel() == 0)
        op_error("generator_adv_loss", "empty score list");
    return scalar_mul(mean_all(fake_scores), -1.0);
}

// Clamp every critic entry to [-c, c].
inline void clip_weights(CriticParams& p, double c) {
    if (c <= 0.0) op_error("clip_weights", "clip constant must be positive");
    for (auto& [name, t] : p.named_tensors()) {
        for (int64_t i = 0; i < t->numel(); ++i) {
            double v = t->at(i);
            t->at(i) = v > c ? c : (v < -c ? -c : v);
        }
    }
}

}  // namespace gapcast
