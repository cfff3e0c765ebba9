#include <gtest/gtest.h>

#include <cmath>

#include "gapcast/grad_check.hpp"
#include "gapcast/random.hpp"
#include "gapcast/tensor.hpp"

using namespace gapcast;

TEST(Primitives, SigmoidAtZero) {
    Tensor x({1}, {0.0});
    EXPECT_DOUBLE_EQ(sigmoid(x).at(0), 0.5);
}

TEST(Primitives, SoftmaxIdenticalLogits) {
    for (double c : {-3.0, 0.0, 17.5}) {
        Tensor x({1, 3}, {c, c, c});
        Tensor y = softmax_rows(x);
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(y.at(0, j), 1.0 / 3.0, 1e-15);
    }
}

TEST(Primitives, MatmulIdentity) {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor b({2, 2}, {3, 4, 5, 6});
    Tensor c = matmul(eye, b);
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(c.at(i), b.at(i));
}

TEST(Primitives, MatmulVectorForms) {
    Tensor v({2}, {1, 2});
    Tensor m({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = matmul(v, m);
    ASSERT_EQ(r.shape(), Shape({3}));
    EXPECT_DOUBLE_EQ(r.at(0), 9);
    EXPECT_DOUBLE_EQ(r.at(1), 12);
    EXPECT_DOUBLE_EQ(r.at(2), 15);

    Tensor w({3}, {1, 1, 1});
    Tensor r2 = matmul(m, w);
    ASSERT_EQ(r2.shape(), Shape({2}));
    EXPECT_DOUBLE_EQ(r2.at(0), 6);
    EXPECT_DOUBLE_EQ(r2.at(1), 15);
}

TEST(Primitives, ShapeMismatchNamesOpAndShapes) {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({2, 2}, {1, 2, 3, 4});
    try {
        matmul(a, b);
        FAIL() << "expected rejection";
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("matmul"), std::string::npos);
        EXPECT_NE(msg.find("[2x3]"), std::string::npos);
        EXPECT_NE(msg.find("[2x2]"), std::string::npos);
    }
}

TEST(Primitives, NonFiniteRejected) {
    Tensor a({2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
    EXPECT_THROW(relu(a), std::invalid_argument);
    Tensor b({1}, {std::numeric_limits<double>::infinity()});
    EXPECT_THROW(scalar_mul(b, 2.0), std::invalid_argument);
}

TEST(Primitives, SoftmaxRowsOnSimplex) {
    Rng rng(7);
    for (int t = 0; t < 50; ++t) {
        Tensor x = rng.uniform_tensor({3, 5}, -30.0, 30.0, false);
        Tensor y = softmax_rows(x);
        for (int i = 0; i < 3; ++i) {
            double sum = 0;
            for (int j = 0; j < 5; ++j) {
                EXPECT_GE(y.at(i, j), 0.0);
                sum += y.at(i, j);
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
}

TEST(Primitives, ReluMatchesMax) {
    Rng rng(3);
    Tensor x = rng.uniform_tensor({40}, -2.0, 2.0, false);
    Tensor y = relu(x);
    for (int64_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y.at(i), std::max(0.0, x.at(i)));
}

TEST(Backward, ProductRule) {
    Tensor a = Tensor::scalar(3.0, true);
    Tensor b = Tensor::scalar(4.0, true);
    Tape tape;
    Tensor root = elementwise_mul(a, b);
    Gradients g = tape.backward(root);
    EXPECT_DOUBLE_EQ(g.of(a).at(0), 4.0);
    EXPECT_DOUBLE_EQ(g.of(b).at(0), 3.0);
}

TEST(Backward, ReluSubgradient) {
    Tensor x({2}, {-1.0, 2.0}, true);
    Tape tape;
    Tensor root = sum_all(relu(x));
    Gradients g = tape.backward(root);
    EXPECT_DOUBLE_EQ(g.of(x).at(0), 0.0);
    EXPECT_DOUBLE_EQ(g.of(x).at(1), 1.0);
}

TEST(Backward, MeanAll) {
    Tensor x({4}, {1, 2, 3, 4}, true);
    Tape tape;
    Tensor root = mean_all(x);
    Gradients g = tape.backward(root);
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g.of(x).at(i), 0.25);
}

TEST(Backward, NonScalarRootRejected) {
    Tensor x({2}, {1, 2}, true);
    Tape tape;
    Tensor y = relu(x);
    EXPECT_THROW(tape.backward(y), std::invalid_argument);
}

TEST(Backward, UnreachableLeafGetsZeros) {
    Tensor x = Tensor::scalar(2.0, true);
    Tensor unused = Tensor::zeros({3, 2}, true);
    Tape tape;
    Tensor root = elementwise_mul(x, x);
    Gradients g = tape.backward(root);
    Tensor gz = g.of(unused);
    ASSERT_EQ(gz.shape(), unused.shape());
    for (int64_t i = 0; i < gz.numel(); ++i) EXPECT_DOUBLE_EQ(gz.at(i), 0.0);
}

TEST(Backward, SumLinearity) {
    Tensor x({3}, {1.0, -2.0, 0.5}, true);
    auto grad_of_scalar = [&](auto make_root) {
        Tape tape;
        Tensor root = make_root();
        return tape.backward(root).of(x);
    };
    Tensor ga = grad_of_scalar([&] { return sum_all(sigmoid(x)); });
    Tensor gb = grad_of_scalar([&] { return sum_all(elementwise_mul(x, x)); });
    Tensor gsum = grad_of_scalar(
        [&] { return add(sum_all(sigmoid(x)), sum_all(elementwise_mul(x, x))); });
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(gsum.at(i), ga.at(i) + gb.at(i), 1e-12);
}

TEST(GradCheck, SquareFunction) {
    Tensor x = Tensor::scalar(3.0, true);
    double err = grad_check([&] { return elementwise_mul(x, x); }, {x}, 1e-6);
    EXPECT_LT(err, 1e-7);
}

TEST(GradCheck, SigmoidSum) {
    Tensor x({1}, {0.0}, true);
    double err = grad_check([&] { return sum_all(sigmoid(x)); }, {x}, 1e-6);
    EXPECT_LT(err, 1e-7);
    Tape tape;
    Tensor root = sum_all(sigmoid(x));
    EXPECT_NEAR(tape.backward(root).of(x).at(0), 0.25, 1e-12);
}

// Every primitive against central differences on random small inputs.
TEST(GradCheck, AllPrimitives) {
    Rng rng(11);

    {
        Tensor a = rng.uniform_tensor({3, 4}, -1, 1);
        Tensor b = rng.uniform_tensor({4, 2}, -1, 1);
        EXPECT_LT(grad_check([&] { return sum_all(matmul(a, b)); }, {a, b}, 1e-6), 1e-5);
    }
    {
        Tensor a = rng.uniform_tensor({5}, -1, 1);
        Tensor b = rng.uniform_tensor({5, 3}, -1, 1);
        EXPECT_LT(grad_check([&] { return mean_all(matmul(a, b)); }, {a, b}, 1e-6), 1e-5);
    }
    {
        Tensor a = rng.uniform_tensor({3, 4}, -1, 1);
        Tensor b = rng.uniform_tensor({3, 4}, -1, 1);
        EXPECT_LT(grad_check([&] { return sum_all(add(a, b)); }, {a, b}, 1e-6), 1e-5);
        EXPECT_LT(grad_check([&] { return sum_all(sub(a, b)); }, {a, b}, 1e-6), 1e-5);
        EXPECT_LT(grad_check([&] { return sum_all(elementwise_mul(a, b)); }, {a, b}, 1e-6), 1e-5);
    }
    {
        // bias broadcast
        Tensor a = rng.uniform_tensor({3, 4}, -1, 1);
        Tensor b = rng.uniform_tensor({4}, -1, 1);
        EXPECT_LT(grad_check([&] { return sum_all(elementwise_mul(add(a, b), add(a, b))); },
                             {a, b}, 1e-6),
                  1e-5);
    }
    {
        Tensor a = rng.uniform_tensor({6}, -2, 2);
        EXPECT_LT(grad_check([&] { return sum_all(scalar_mul(a, -1.7)); }, {a}, 1e-6), 1e-5);
        EXPECT_LT(grad_check([&] { return sum_all(sigmoid(a)); }, {a}, 1e-6), 1e-5);
        EXPECT_LT(grad_check([&] { return sum_all(tanh(a)); }, {a}, 1e-6), 1e-5);
        EXPECT_LT(grad_check([&] { return sum_all(exp(a)); }, {a}, 1e-6), 1e-5);
        EXPECT_LT(grad_check([&] { return sum_all(leaky_relu(a, 0.2)); }, {a}, 1e-6), 1e-5);
        EXPECT_LT(grad_check([&] { return mean_all(a); }, {a}, 1e-6), 1e-5);
    }
    {
        // keep relu inputs away from the hinge
        Tensor a({4}, {-1.5, 0.7, 2.0, -0.1}, true);
        EXPECT_LT(grad_check([&] { return sum_all(relu(a)); }, {a}, 1e-6), 1e-5);
    }
    {
        Tensor a = rng.uniform_tensor({2, 5}, -2, 2);
        Tensor w = rng.uniform_tensor({2, 5}, -1, 1);
        EXPECT_LT(grad_check([&] { return sum_all(elementwise_mul(softmax_rows(a), w)); }, {a},
                             1e-6),
                  1e-5);
    }
    {
        Tensor a = rng.uniform_tensor({3}, -1, 1);
        Tensor b = rng.uniform_tensor({2}, -1, 1);
        Tensor w = rng.uniform_tensor({5}, -1, 1);
        EXPECT_LT(grad_check([&] { return sum_all(elementwise_mul(concat_cols({a, b}), w)); },
                             {a, b}, 1e-6),
                  1e-5);
    }
    {
        Tensor a = rng.uniform_tensor({6}, -1, 1);
        EXPECT_LT(grad_check([&] { return sum_all(slice(reshape(a, {3, 2}), 1, 2)); }, {a}, 1e-6),
                  1e-5);
    }
    {
        Tensor x = rng.uniform_tensor({2, 3, 4}, -1, 1);
        Tensor k = rng.uniform_tensor({3, 2, 3, 3}, -0.5, 0.5);
        Tensor b = rng.uniform_tensor({3}, -0.5, 0.5);
        EXPECT_LT(grad_check([&] { return sum_all(conv2d(x, k, b)); }, {x, k, b}, 1e-6), 1e-5);
        Tensor w = rng.uniform_tensor({3, 3, 4}, -1, 1, false);
        EXPECT_LT(grad_check([&] { return sum_all(elementwise_mul(conv2d(x, k, b), w)); },
                             {x, k, b}, 1e-6),
                  1e-5);
    }
}

TEST(Conv2d, KnownValues) {
    // single channel, all-ones 3x3 kernel: each output = sum of 3x3 neighborhood
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor b({1}, {0.0});
    Tensor y = conv2d(x, k, b);
    EXPECT_DOUBLE_EQ(y.at(0), 10.0);
    EXPECT_DOUBLE_EQ(y.at(1), 10.0);
    EXPECT_DOUBLE_EQ(y.at(2), 10.0);
    EXPECT_DOUBLE_EQ(y.at(3), 10.0);
}

TEST(Tape, LeafNotSharedBetweenCopies) {
    Tensor x = Tensor::scalar(5.0, true);
    Tensor alias = x;  // shares storage, same node
    Tape tape;
    Tensor root = elementwise_mul(x, alias);
    Gradients g = tape.backward(root);
    EXPECT_DOUBLE_EQ(g.of(x).at(0), 10.0);
}

TEST(Tape, NoRecordingWithoutGrad) {
    Tensor x = Tensor::scalar(5.0, false);
    Tape tape;
    Tensor y = elementwise_mul(x, x);
    EXPECT_EQ(tape.num_steps(), 0u);
    EXPECT_DOUBLE_EQ(y.at(0), 25.0);
}
