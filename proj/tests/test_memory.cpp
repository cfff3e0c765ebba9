#include <gtest/gtest.h>

#include <cmath>

#include "gapcast/grad_check.hpp"
#include "gapcast/memory.hpp"

using namespace gapcast;

namespace {

MemoryBank small_bank(int64_t slots, int64_t slot_dim, int64_t d, uint64_t seed) {
    Rng rng(seed);
    return MemoryBank::init(slots, slot_dim, d, rng);
}

}  // namespace

TEST(BuildQuery, ZeroMapAndBiasOnly) {
    MemoryBank bank = small_bank(2, 3, 2, 1);
    bank.query_w = Tensor::zeros({3, 6}, true);
    bank.query_b = Tensor::zeros({3}, true);
    Tensor z({2}, {1, 2});
    Tensor zb({2}, {3, 4});
    Tensor xt({2}, {5, 6});
    Tensor q = build_query(z, zb, xt, bank);
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(q.at(i), 0.0);

    bank.query_b = Tensor({3}, {7, 8, 9}, true);
    Tensor q2 = build_query(z, zb, xt, bank);
    EXPECT_DOUBLE_EQ(q2.at(0), 7.0);
    EXPECT_DOUBLE_EQ(q2.at(1), 8.0);
    EXPECT_DOUBLE_EQ(q2.at(2), 9.0);
}

TEST(BuildQuery, DotProduct) {
    MemoryBank bank = small_bank(2, 1, 1, 1);
    bank.query_w = Tensor({1, 3}, {1, 1, 1}, true);
    bank.query_b = Tensor::zeros({1}, true);
    Tensor q = build_query(Tensor({1}, {1.0}), Tensor({1}, {2.0}), Tensor({1}, {3.0}), bank);
    EXPECT_DOUBLE_EQ(q.at(0), 6.0);
}

TEST(BuildQuery, DimensionMismatchRejected) {
    MemoryBank bank = small_bank(2, 3, 2, 1);
    Tensor z({3}, {1, 2, 3});  // wrong d
    EXPECT_THROW(build_query(z, z, z, bank), std::invalid_argument);
}

TEST(Attend, IdenticalRowsGiveUniform) {
    MemoryBank bank = small_bank(4, 3, 2, 1);
    for (int64_t l = 0; l < 4; ++l)
        for (int64_t c = 0; c < 3; ++c) bank.bank.at(l, c) = static_cast<double>(c) + 1.0;
    Tensor q({3}, {0.5, -1.0, 2.0});
    Attention att = attend(bank, q);
    for (int64_t l = 0; l < 4; ++l) EXPECT_NEAR(att.weights.at(l), 0.25, 1e-15);
    for (int64_t c = 0; c < 3; ++c) EXPECT_NEAR(att.readout.at(c), static_cast<double>(c) + 1.0, 1e-15);
}

TEST(Attend, TwoSlotLogitGap) {
    MemoryBank bank = small_bank(2, 2, 1, 1);
    bank.bank = Tensor({2, 2}, {1, 0, 0, 1}, true);
    Tensor q({2}, {10.0, 0.0});
    Attention att = attend(bank, q);
    double expect_hi = std::exp(10.0) / (std::exp(10.0) + 1.0);
    EXPECT_NEAR(att.weights.at(0), expect_hi, 1e-10);
    EXPECT_NEAR(att.weights.at(1), 1.0 - expect_hi, 1e-10);
    EXPECT_NEAR(att.weights.at(0), 0.9999546, 1e-7);
    EXPECT_NEAR(att.weights.at(1), 0.0000454, 1e-7);
    EXPECT_NEAR(att.readout.at(0), expect_hi, 1e-10);
    EXPECT_NEAR(att.readout.at(1), 1.0 - expect_hi, 1e-10);
}

TEST(Attend, ZeroQueryGivesColumnMean) {
    MemoryBank bank = small_bank(3, 2, 1, 7);
    Tensor q = Tensor::zeros({2});
    Attention att = attend(bank, q);
    for (int64_t c = 0; c < 2; ++c) {
        double mean = (bank.bank.at(0, c) + bank.bank.at(1, c) + bank.bank.at(2, c)) / 3.0;
        EXPECT_NEAR(att.readout.at(c), mean, 1e-15);
    }
}

TEST(Attend, SimplexAndScaleInvariance) {
    Rng rng(123);
    for (int trial = 0; trial < 500; ++trial) {
        int64_t slots = 2 + static_cast<int64_t>(rng.below(6));
        int64_t dim = 1 + static_cast<int64_t>(rng.below(5));
        MemoryBank bank = small_bank(slots, dim, 1, rng.next_u64());
        bank.bank = rng.uniform_tensor({slots, dim}, -2, 2);
        Tensor q = rng.uniform_tensor({dim}, -2, 2, false);
        Attention att = attend(bank, q);
        double sum = 0.0;
        int64_t argmax = 0;
        for (int64_t l = 0; l < slots; ++l) {
            EXPECT_GE(att.weights.at(l), 0.0);
            sum += att.weights.at(l);
            if (att.weights.at(l) > att.weights.at(argmax)) argmax = l;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);

        Tensor q_scaled = scalar_mul(q, rng.uniform(0.1, 10.0));
        Attention att2 = attend(bank, q_scaled);
        int64_t argmax2 = 0;
        for (int64_t l = 0; l < slots; ++l)
            if (att2.weights.at(l) > att2.weights.at(argmax2)) argmax2 = l;
        EXPECT_EQ(argmax, argmax2);
    }
}

TEST(Attend, ReadoutIsConvexWitness) {
    // the returned weights are themselves the convex-combination witness
    Rng rng(9);
    MemoryBank bank = small_bank(5, 3, 1, 3);
    bank.bank = rng.uniform_tensor({5, 3}, -1, 1);
    Tensor q = rng.uniform_tensor({3}, -1, 1, false);
    Attention att = attend(bank, q);
    for (int64_t c = 0; c < 3; ++c) {
        double combo = 0.0;
        for (int64_t l = 0; l < 5; ++l) combo += att.weights.at(l) * bank.bank.at(l, c);
        EXPECT_NEAR(att.readout.at(c), combo, 1e-12);
    }
}

TEST(Gradients, BankMatchesFiniteDifferences) {
    Rng rng(17);
    MemoryBank bank = small_bank(3, 4, 2, 5);
    Tensor z = rng.uniform_tensor({2}, -1, 1, false);
    Tensor zb = rng.uniform_tensor({2}, -1, 1, false);
    Tensor xt = rng.uniform_tensor({2}, -1, 1, false);
    Tensor target = rng.uniform_tensor({2}, -1, 1, false);
    auto fn = [&] {
        Tensor q = build_query(z, zb, xt, bank);
        Attention att = attend(bank, q);
        Tensor out = project_readout(bank, att.readout);
        Tensor err = sub(out, target);
        return sum_all(elementwise_mul(err, err));
    };
    double err = grad_check(fn, {bank.bank, bank.query_w, bank.query_b, bank.readout_w}, 1e-6);
    EXPECT_LT(err, 1e-5);
}
