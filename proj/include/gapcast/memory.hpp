#pragma once

// Globally trained pattern memory. Local statistics are concatenated into a
// query, matched against the bank rows by softmax similarity, and read out as
// a convex combination of rows. The readout is projected back to the input
// width before fusion, since the slot width and the variable count differ.

#include "gapcast/random.hpp"
#include "gapcast/tensor.hpp"

namespace gapcast {

struct MemoryBank {
    Tensor bank;       // L x slot_dim, trainable pattern rows
    Tensor query_w;    // slot_dim x 3d
    Tensor query_b;    // slot_dim
    Tensor readout_w;  // slot_dim x d, maps the readout back to input width

    int64_t slots() const { return bank.dim(0); }
    int64_t slot_dim() const { return bank.dim(1); }

    static MemoryBank init(int64_t slots, int64_t slot_dim, int64_t d, Rng& rng) {
        MemoryBank m;
        m.bank = rng.uniform_tensor({slots, slot_dim}, -0.1, 0.1);
        m.query_w = rng.glorot({slot_dim, 3 * d}, 3 * d, slot_dim);
        m.query_b = Tensor::zeros({slot_dim}, true);
        m.readout_w = rng.glorot({slot_dim, d}, slot_dim, d);
        return m;
    }
};

// q = W_q [z || z' || model_estimate] + b_q
inline Tensor build_query(const Tensor& z, const Tensor& z_backward, const Tensor& model_estimate,
                          const MemoryBank& bank) {
    Tensor key = concat_cols({z, z_backward, model_estimate});
    if (key.dim(0) != bank.query_w.dim(1))
        op_error("build_query", "key length " + std::to_string(key.dim(0)) + " does not match " +
                                    shape_str(bank.query_w.shape()));
    return add(matmul(bank.query_w, key), bank.query_b);
}

struct Attention {
    Tensor weights;  // L, on the probability simplex
    Tensor readout;  // slot_dim
};

// weights = softmax(bank . q); readout = weights^T bank
inline Attention attend(const MemoryBank& bank, const Tensor& query) {
    if (query.shape() != Shape{bank.slot_dim()})
        op_error("attend", "query " + shape_str(query.shape()) + " does not match bank " +
                               shape_str(bank.bank.shape()));
    Tensor logits = matmul(bank.bank, query);                       // L
    Tensor weights = softmax_rows(reshape(logits, {1, bank.slots()}));
    Tensor readout = reshape(matmul(weights, bank.bank), {bank.slot_dim()});
    return Attention{reshape(weights, {bank.slots()}), readout};
}

inline Tensor project_readout(const MemoryBank& bank, const Tensor& readout) {
    return matmul(readout, bank.readout_w);
}

}  // namespace gapcast
