#pragma once

// Dense real tensors plus a reverse-mode tape.
//
// Tensors are shallow-copy handles: copying shares the value buffer, and the
// buffer address is what identifies a tensor as a graph node. A Tape records
// primitive applications in execution order (so the record is already
// topologically sorted); backward() walks it in reverse. One tape per
// training step, discarded afterwards.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace gapcast {

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

[[noreturn]] inline void op_error(const char* op, const std::string& detail) {
    throw std::invalid_argument(std::string(op) + ": " + detail);
}

class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(std::move(values))),
          requires_grad_(requires_grad) {
        if (shape_numel(shape_) != static_cast<int64_t>(data_->size()))
            op_error("tensor", "shape " + shape_str(shape_) + " does not match " +
                                   std::to_string(data_->size()) + " values");
        for (int64_t d : shape_)
            if (d <= 0) op_error("tensor", "non-positive dimension in " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        size_t n = static_cast<size_t>(shape_numel(shape));
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        size_t n = static_cast<size_t>(shape_numel(shape));
        return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor({1}, {v}, requires_grad);
    }

    const Shape& shape() const { return shape_; }
    int64_t numel() const { return shape_numel(shape_); }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(size_t i) const { return shape_[i]; }
    bool defined() const { return data_ != nullptr; }
    bool requires_grad() const { return requires_grad_; }
    Tensor& set_requires_grad(bool b) {
        requires_grad_ = b;
        return *this;
    }

    const double* data() const { return data_->data(); }
    double* data() { return data_->data(); }
    const std::vector<double>& values() const { return *data_; }

    double at(int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }
    double at(int64_t r, int64_t c) const {
        return (*data_)[static_cast<size_t>(r * shape_[1] + c)];
    }
    double& at(int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    double& at(int64_t r, int64_t c) {
        return (*data_)[static_cast<size_t>(r * shape_[1] + c)];
    }

    double scalar_value() const {
        if (numel() != 1) op_error("scalar_value", "tensor " + shape_str(shape_) + " is not a scalar");
        return (*data_)[0];
    }

    // Deep copy with fresh storage (new graph identity).
    Tensor clone() const { return Tensor(shape_, *data_, requires_grad_); }

    // Identity key used by the tape.
    const void* id() const { return data_.get(); }

    bool all_finite() const {
        for (double v : *data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    bool requires_grad_ = false;
};

enum class Op {
    matmul,
    add,
    sub,
    elementwise_mul,
    scalar_mul,
    sigmoid,
    tanh_,
    exp_,
    relu,
    leaky_relu,
    softmax_rows,
    concat_cols,
    mean_all,
    sum_all,
    conv2d,
    reshape,
    slice,
};

class Gradients;

// ComputationRecord: ordered list of primitive applications. Creating a Tape
// makes it the active record for the current thread; destruction restores the
// previous one. Must not be shared across threads while live.
class Tape {
public:
    struct Node {
        Shape shape;
        bool is_leaf = false;
    };

    struct Step {
        Op op;
        std::vector<int> inputs;  // node id, or -1 for non-grad inputs
        int output = -1;
        std::vector<Tensor> saved;  // activations needed for backward
        double attr = 0.0;
        Shape attr_shape;
    };

    Tape() : prev_(current_ptr()) { current_ptr() = this; }
    ~Tape() { current_ptr() = prev_; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current() { return current_ptr(); }

    // Node id for a tensor already seen on this tape, else -1.
    int lookup(const Tensor& t) const {
        auto it = ids_.find(t.id());
        return it == ids_.end() ? -1 : it->second;
    }

    // Register a tensor (leaf when first seen as an op input).
    int node_for(const Tensor& t, bool leaf) {
        auto it = ids_.find(t.id());
        if (it != ids_.end()) return it->second;
        int id = static_cast<int>(nodes_.size());
        ids_.emplace(t.id(), id);
        nodes_.push_back(Node{t.shape(), leaf});
        keep_alive_.push_back(t);
        return id;
    }

    void record(Step step) { steps_.push_back(std::move(step)); }

    size_t num_steps() const { return steps_.size(); }
    size_t num_nodes() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

    Gradients backward(const Tensor& root);

private:
    static Tape*& current_ptr() {
        static thread_local Tape* cur = nullptr;
        return cur;
    }

    Tape* prev_;
    std::unordered_map<const void*, int> ids_;
    std::vector<Node> nodes_;
    std::vector<Tensor> keep_alive_;  // leaves stay valid for grad lookup
    std::vector<Step> steps_;

    friend class Gradients;
};

// Gradient of the backward root with respect to every node; leaves that the
// root does not reach get zeros of their shape.
class Gradients {
public:
    Tensor at_node(int id) const {
        auto it = grads_.find(id);
        if (it != grads_.end()) return it->second;
        if (id < 0 || static_cast<size_t>(id) >= shapes_.size())
            op_error("gradients", "unknown node id " + std::to_string(id));
        return Tensor::zeros(shapes_[static_cast<size_t>(id)]);
    }

    Tensor of(const Tensor& t) const {
        auto it = ids_.find(t.id());
        if (it == ids_.end()) return Tensor::zeros(t.shape());
        return at_node(it->second);
    }

private:
    std::unordered_map<int, Tensor> grads_;
    std::unordered_map<const void*, int> ids_;
    std::vector<Shape> shapes_;

    friend class Tape;
};

namespace detail {

inline void check_finite(const char* op, const Tensor& t) {
    if (!t.all_finite()) op_error(op, "non-finite input value");
}

// Shared-dimension panel size: keeps the streamed operand resident in L2
// while the other operands are revisited once per panel.
inline constexpr int64_t kGemmPanel = 128;

// C (m x n) += A (m x k) * B (k x n), row major.
inline void matmul_accum(const double* a, const double* b, double* c, int64_t m, int64_t k,
                         int64_t n) {
    for (int64_t p0 = 0; p0 < k; p0 += kGemmPanel) {
        int64_t p1 = std::min(k, p0 + kGemmPanel);
        for (int64_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            double* crow = c + i * n;
            for (int64_t p = p0; p < p1; ++p) {
                double av = arow[p];
                if (av == 0.0) continue;
                const double* brow = b + p * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

// Dot product with four independent accumulator chains; the fixed reduction
// order keeps results deterministic.
inline double dot_unrolled(const double* a, const double* b, int64_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    int64_t n4 = n - (n % 4);
    int64_t j = 0;
    for (; j < n4; j += 4) {
        acc0 += a[j] * b[j];
        acc1 += a[j + 1] * b[j + 1];
        acc2 += a[j + 2] * b[j + 2];
        acc3 += a[j + 3] * b[j + 3];
    }
    double acc = (acc0 + acc1) + (acc2 + acc3);
    for (; j < n; ++j) acc += a[j] * b[j];
    return acc;
}

// C (m x k) += A (m x n) * B^T where B is (k x n).
inline void matmul_bt_accum(const double* a, const double* b, double* c, int64_t m, int64_t n,
                            int64_t k) {
    for (int64_t p0 = 0; p0 < k; p0 += kGemmPanel) {
        int64_t p1 = std::min(k, p0 + kGemmPanel);
        for (int64_t i = 0; i < m; ++i) {
            const double* arow = a + i * n;
            double* crow = c + i * k;
            for (int64_t p = p0; p < p1; ++p)
                crow[p] += dot_unrolled(arow, b + p * n, n);
        }
    }
}

// C (k x n) += A^T * B where A is (m x k), B is (m x n).
inline void matmul_at_accum(const double* a, const double* b, double* c, int64_t m, int64_t k,
                            int64_t n) {
    for (int64_t p0 = 0; p0 < k; p0 += kGemmPanel) {
        int64_t p1 = std::min(k, p0 + kGemmPanel);
        for (int64_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            const double* brow = b + i * n;
            for (int64_t p = p0; p < p1; ++p) {
                double av = arow[p];
                if (av == 0.0) continue;
                double* crow = c + p * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

// Patch matrix for 3x3/pad-1 convolution: row per spatial position, columns
// (ci, di, dj) flattened; out-of-bounds taps are zero.
inline void im2col_3x3(const double* x, int64_t cin, int64_t h, int64_t w, double* patches) {
    int64_t cols = cin * 9;
    for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
            double* row = patches + (i * w + j) * cols;
            for (int64_t ci = 0; ci < cin; ++ci) {
                const double* xc = x + ci * h * w;
                for (int64_t di = -1; di <= 1; ++di) {
                    for (int64_t dj = -1; dj <= 1; ++dj) {
                        int64_t ii = i + di, jj = j + dj;
                        row[ci * 9 + (di + 1) * 3 + (dj + 1)] =
                            (ii >= 0 && ii < h && jj >= 0 && jj < w) ? xc[ii * w + jj] : 0.0;
                    }
                }
            }
        }
    }
}

inline bool tape_should_record(const Tensor& out) {
    return Tape::current() != nullptr && out.requires_grad();
}

inline void record_unary(Op op, const Tensor& in, const Tensor& out, std::vector<Tensor> saved,
                         double attr = 0.0, Shape attr_shape = {}) {
    if (!tape_should_record(out)) return;
    Tape* t = Tape::current();
    Tape::Step s;
    s.op = op;
    s.inputs = {in.requires_grad() ? t->node_for(in, true) : -1};
    s.output = t->node_for(out, false);
    s.saved = std::move(saved);
    s.attr = attr;
    s.attr_shape = std::move(attr_shape);
    t->record(std::move(s));
}

inline void record_binary(Op op, const Tensor& a, const Tensor& b, const Tensor& out,
                          std::vector<Tensor> saved) {
    if (!tape_should_record(out)) return;
    Tape* t = Tape::current();
    Tape::Step s;
    s.op = op;
    s.inputs = {a.requires_grad() ? t->node_for(a, true) : -1,
                b.requires_grad() ? t->node_for(b, true) : -1};
    s.output = t->node_for(out, false);
    s.saved = std::move(saved);
    t->record(std::move(s));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives. Each checks shapes and input finiteness, computes the forward
// value, and records itself on the active tape when the output needs grad.
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::check_finite("matmul", a);
    detail::check_finite("matmul", b);
    // Accept 1-D operands as a single row (lhs) / single column (rhs).
    int64_t m, k, k2, n;
    if (a.rank() == 2) {
        m = a.dim(0);
        k = a.dim(1);
    } else if (a.rank() == 1) {
        m = 1;
        k = a.dim(0);
    } else {
        op_error("matmul", "lhs rank " + shape_str(a.shape()));
    }
    if (b.rank() == 2) {
        k2 = b.dim(0);
        n = b.dim(1);
    } else if (b.rank() == 1) {
        k2 = b.dim(0);
        n = 1;
    } else {
        op_error("matmul", "rhs rank " + shape_str(b.shape()));
    }
    if (k != k2)
        op_error("matmul", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));

    Shape out_shape;
    if (a.rank() == 2 && b.rank() == 2)
        out_shape = {m, n};
    else if (a.rank() == 1 && b.rank() == 2)
        out_shape = {n};
    else if (a.rank() == 2 && b.rank() == 1)
        out_shape = {m};
    else
        out_shape = {1};

    Tensor out = Tensor::zeros(std::move(out_shape), a.requires_grad() || b.requires_grad());
    detail::matmul_accum(a.data(), b.data(), out.data(), m, k, n);
    detail::record_binary(Op::matmul, a, b, out, {a, b});
    return out;
}

// Elementwise addition of same-shape tensors, plus row-broadcast of a bias
// vector onto a matrix: (m x n) + (n).
inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_finite("add", a);
    detail::check_finite("add", b);
    bool broadcast = a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0);
    if (!broadcast && a.shape() != b.shape())
        op_error("add", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));

    Tensor out = Tensor::zeros(a.shape(), a.requires_grad() || b.requires_grad());
    if (broadcast) {
        int64_t m = a.dim(0), n = a.dim(1);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) out.at(i, j) = a.at(i, j) + b.at(j);
    } else {
        for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) + b.at(i);
    }
    detail::record_binary(Op::add, a, b, out, {});
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_finite("sub", a);
    detail::check_finite("sub", b);
    if (a.shape() != b.shape())
        op_error("sub", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad() || b.requires_grad());
    for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) - b.at(i);
    detail::record_binary(Op::sub, a, b, out, {});
    return out;
}

inline Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
    detail::check_finite("elementwise_mul", a);
    detail::check_finite("elementwise_mul", b);
    if (a.shape() != b.shape())
        op_error("elementwise_mul",
                 "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad() || b.requires_grad());
    for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * b.at(i);
    detail::record_binary(Op::elementwise_mul, a, b, out, {a, b});
    return out;
}

inline Tensor scalar_mul(const Tensor& a, double c) {
    detail::check_finite("scalar_mul", a);
    if (!std::isfinite(c)) op_error("scalar_mul", "non-finite scalar");
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * c;
    detail::record_unary(Op::scalar_mul, a, out, {}, c);
    return out;
}

inline Tensor sigmoid(const Tensor& a) {
    detail::check_finite("sigmoid", a);
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (int64_t i = 0; i < a.numel(); ++i) {
        double x = a.at(i);
        out.at(i) = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    detail::record_unary(Op::sigmoid, a, out, {out});
    return out;
}

inline Tensor tanh(const Tensor& a) {
    detail::check_finite("tanh", a);
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = std::tanh(a.at(i));
    detail::record_unary(Op::tanh_, a, out, {out});
    return out;
}

inline Tensor exp(const Tensor& a) {
    detail::check_finite("exp", a);
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = std::exp(a.at(i));
    if (!out.all_finite()) op_error("exp", "overflow");
    detail::record_unary(Op::exp_, a, out, {out});
    return out;
}

inline Tensor relu(const Tensor& a) {
    detail::check_finite("relu", a);
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) > 0.0 ? a.at(i) : 0.0;
    detail::record_unary(Op::relu, a, out, {a});
    return out;
}

inline Tensor leaky_relu(const Tensor& a, double slope) {
    detail::check_finite("leaky_relu", a);
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (int64_t i = 0; i < a.numel(); ++i) {
        double x = a.at(i);
        out.at(i) = x > 0.0 ? x : slope * x;
    }
    detail::record_unary(Op::leaky_relu, a, out, {a}, slope);
    return out;
}

// Row-wise softmax of a 2-D tensor, max-subtracted for stability.
inline Tensor softmax_rows(const Tensor& a) {
    detail::check_finite("softmax_rows", a);
    if (a.rank() != 2) op_error("softmax_rows", "expected 2-D input, got " + shape_str(a.shape()));
    int64_t m = a.dim(0), n = a.dim(1);
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (int64_t i = 0; i < m; ++i) {
        double mx = a.at(i, 0);
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
        double sum = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            double e = std::exp(a.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        for (int64_t j = 0; j < n; ++j) out.at(i, j) /= sum;
    }
    detail::record_unary(Op::softmax_rows, a, out, {out});
    return out;
}

// Concatenate 1-D tensors end to end.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) op_error("concat_cols", "no inputs");
    int64_t total = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        detail::check_finite("concat_cols", p);
        if (p.rank() != 1)
            op_error("concat_cols", "expected 1-D inputs, got " + shape_str(p.shape()));
        total += p.dim(0);
        rg = rg || p.requires_grad();
    }
    Tensor out = Tensor::zeros({total}, rg);
    int64_t off = 0;
    for (const Tensor& p : parts) {
        std::copy(p.data(), p.data() + p.numel(), out.data() + off);
        off += p.numel();
    }
    if (detail::tape_should_record(out)) {
        Tape* t = Tape::current();
        Tape::Step s;
        s.op = Op::concat_cols;
        for (const Tensor& p : parts) {
            s.inputs.push_back(p.requires_grad() ? t->node_for(p, true) : -1);
            s.attr_shape.push_back(p.dim(0));
        }
        s.output = t->node_for(out, false);
        t->record(std::move(s));
    }
    return out;
}

inline Tensor sum_all(const Tensor& a) {
    detail::check_finite("sum_all", a);
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.at(i);
    Tensor out = Tensor::scalar(acc, a.requires_grad());
    detail::record_unary(Op::sum_all, a, out, {}, 0.0, a.shape());
    return out;
}

inline Tensor mean_all(const Tensor& a) {
    detail::check_finite("mean_all", a);
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a.at(i);
    Tensor out = Tensor::scalar(acc / static_cast<double>(a.numel()), a.requires_grad());
    detail::record_unary(Op::mean_all, a, out, {}, 0.0, a.shape());
    return out;
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    detail::check_finite("reshape", a);
    if (shape_numel(shape) != a.numel())
        op_error("reshape",
                 "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    Tensor out(shape, a.values(), a.requires_grad());
    detail::record_unary(Op::reshape, a, out, {}, 0.0, a.shape());
    return out;
}

// Contiguous range along the first dimension.
inline Tensor slice(const Tensor& a, int64_t start, int64_t len) {
    detail::check_finite("slice", a);
    if (a.rank() < 1) op_error("slice", "scalar input");
    if (start < 0 || len < 1 || start + len > a.dim(0))
        op_error("slice", "range [" + std::to_string(start) + "," + std::to_string(start + len) +
                              ") out of bounds for " + shape_str(a.shape()));
    int64_t row = a.numel() / a.dim(0);
    Shape out_shape = a.shape();
    out_shape[0] = len;
    std::vector<double> vals(static_cast<size_t>(len * row));
    std::copy(a.data() + start * row, a.data() + (start + len) * row, vals.begin());
    Tensor out(out_shape, std::move(vals), a.requires_grad());
    detail::record_unary(Op::slice, a, out, {}, static_cast<double>(start), a.shape());
    return out;
}

// 3x3 convolution, stride 1, zero padding 1. Input (Cin,H,W), kernel
// (Cout,Cin,3,3), bias (Cout); output (Cout,H,W).
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    detail::check_finite("conv2d", x);
    detail::check_finite("conv2d", kernel);
    detail::check_finite("conv2d", bias);
    if (x.rank() != 3)
        op_error("conv2d", "expected (C,H,W) input, got " + shape_str(x.shape()));
    if (kernel.rank() != 4 || kernel.dim(2) != 3 || kernel.dim(3) != 3)
        op_error("conv2d", "expected (Cout,Cin,3,3) kernel, got " + shape_str(kernel.shape()));
    if (kernel.dim(1) != x.dim(0))
        op_error("conv2d", "shape mismatch " + shape_str(x.shape()) + " vs " +
                               shape_str(kernel.shape()));
    if (bias.rank() != 1 || bias.dim(0) != kernel.dim(0))
        op_error("conv2d", "bias " + shape_str(bias.shape()) + " does not match kernel " +
                               shape_str(kernel.shape()));

    int64_t cin = x.dim(0), h = x.dim(1), w = x.dim(2), cout = kernel.dim(0);
    Tensor out = Tensor::zeros({cout, h, w},
                               x.requires_grad() || kernel.requires_grad() || bias.requires_grad());
    // out (cout x hw) = kernel (cout x cin*9) . patches^T, which is exactly
    // the (Cout,H,W) layout
    std::vector<double> patches(static_cast<size_t>(h * w * cin * 9));
    detail::im2col_3x3(x.data(), cin, h, w, patches.data());
    double* od = out.data();
    detail::matmul_bt_accum(kernel.data(), patches.data(), od, cout, cin * 9, h * w);
    for (int64_t co = 0; co < cout; ++co) {
        double b = bias.at(co);
        for (int64_t p = 0; p < h * w; ++p) od[co * h * w + p] += b;
    }
    if (detail::tape_should_record(out)) {
        Tape* t = Tape::current();
        Tape::Step s;
        s.op = Op::conv2d;
        s.inputs = {x.requires_grad() ? t->node_for(x, true) : -1,
                    kernel.requires_grad() ? t->node_for(kernel, true) : -1,
                    bias.requires_grad() ? t->node_for(bias, true) : -1};
        s.output = t->node_for(out, false);
        s.saved = {x, kernel};
        t->record(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

inline Gradients Tape::backward(const Tensor& root) {
    if (root.numel() != 1) op_error("backward", "root " + shape_str(root.shape()) + " is not a scalar");
    int root_id = lookup(root);
    if (root_id < 0) op_error("backward", "root was not recorded on this tape");

    std::vector<std::vector<double>> grads(nodes_.size());
    auto grad_of = [&](int id) -> std::vector<double>& {
        auto& g = grads[static_cast<size_t>(id)];
        if (g.empty()) g.assign(static_cast<size_t>(shape_numel(nodes_[static_cast<size_t>(id)].shape)), 0.0);
        return g;
    };
    grad_of(root_id)[0] = 1.0;

    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
        const Step& s = *it;
        const auto& gout_v = grads[static_cast<size_t>(s.output)];
        if (gout_v.empty()) continue;  // output not reachable from root
        const double* go = gout_v.data();
        const Shape& oshape = nodes_[static_cast<size_t>(s.output)].shape;

        switch (s.op) {
            case Op::matmul: {
                const Tensor& a = s.saved[0];
                const Tensor& b = s.saved[1];
                int64_t m = a.rank() == 2 ? a.dim(0) : 1;
                int64_t k = a.rank() == 2 ? a.dim(1) : a.dim(0);
                int64_t n = b.rank() == 2 ? b.dim(1) : 1;
                if (s.inputs[0] >= 0)
                    detail::matmul_bt_accum(go, b.data(), grad_of(s.inputs[0]).data(), m, n, k);
                if (s.inputs[1] >= 0)
                    detail::matmul_at_accum(a.data(), go, grad_of(s.inputs[1]).data(), m, k, n);
                break;
            }
            case Op::add: {
                if (s.inputs[0] >= 0) {
                    auto& g = grad_of(s.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i) g[i] += go[i];
                }
                if (s.inputs[1] >= 0) {
                    auto& g = grad_of(s.inputs[1]);
                    if (g.size() == gout_v.size()) {
                        for (size_t i = 0; i < g.size(); ++i) g[i] += go[i];
                    } else {  // bias broadcast: column sums
                        int64_t n = static_cast<int64_t>(g.size());
                        int64_t m = static_cast<int64_t>(gout_v.size()) / n;
                        for (int64_t i = 0; i < m; ++i)
                            for (int64_t j = 0; j < n; ++j)
                                g[static_cast<size_t>(j)] += go[i * n + j];
                    }
                }
                break;
            }
            case Op::sub: {
                if (s.inputs[0] >= 0) {
                    auto& g = grad_of(s.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i) g[i] += go[i];
                }
                if (s.inputs[1] >= 0) {
                    auto& g = grad_of(s.inputs[1]);
                    for (size_t i = 0; i < g.size(); ++i) g[i] -= go[i];
                }
                break;
            }
            case Op::elementwise_mul: {
                const Tensor& a = s.saved[0];
                const Tensor& b = s.saved[1];
                if (s.inputs[0] >= 0) {
                    auto& g = grad_of(s.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i) g[i] += go[i] * b.at(static_cast<int64_t>(i));
                }
                if (s.inputs[1] >= 0) {
                    auto& g = grad_of(s.inputs[1]);
                    for (size_t i = 0; i < g.size(); ++i) g[i] += go[i] * a.at(static_cast<int64_t>(i));
                }
                break;
            }
            case Op::scalar_mul: {
                if (s.inputs[0] >= 0) {
                    auto& g = grad_of(s.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i) g[i] += go[i] * s.attr;
                }
                break;
            }
            case Op::sigmoid: {
                if (s.inputs[0] >= 0) {
                    const Tensor& y = s.saved[0];
                    auto& g = grad_of(s.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i) {
                        double yv = y.at(static_cast<int64_t>(i));
                        g[i] += go[i] * yv * (1.0 - yv);
                    }
                }
                break;
            }
            case Op::tanh_: {
                if (s.inputs[0] >= 0) {
                    const Tensor& y = s.saved[0];
                    auto& g = grad_of(s.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i) {
                        double yv = y.at(static_cast<int64_t>(i));
                        g[i] += go[i] * (1.0 - yv * yv);
                    }
                }
                break;
            }
            case Op::exp_: {
                if (s.inputs[0] >= 0) {
                    const Tensor& y = s.saved[0];
                    auto& g = grad_of(s.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i) g[i] += go[i] * y.at(static_cast<int64_t>(i));
                }
                break;
            }
            case Op::relu: {
                if (s.inputs[0] >= 0) {
                    const Tensor& x = s.saved[0];
                    auto& g = grad_of(s.inputs[0]);
                    // subgradient 0 at the hinge
                    for (size_t i = 0; i < g.size(); ++i)
                        if (x.at(static_cast<int64_t>(i)) > 0.0) g[i] += go[i];
                }
                break;
            }
            case Op::leaky_relu: {
                if (s.inputs[0] >= 0) {
                    const Tensor& x = s.saved[0];
                    auto& g = grad_of(s.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i)
                        g[i] += go[i] * (x.at(static_cast<int64_t>(i)) > 0.0 ? 1.0 : s.attr);
                }
                break;
            }
            case Op::softmax_rows: {
                if (s.inputs[0] >= 0) {
                    const Tensor& y = s.saved[0];
                    auto& g = grad_of(s.inputs[0]);
                    int64_t m = y.dim(0), n = y.dim(1);
                    for (int64_t i = 0; i < m; ++i) {
                        double dot = 0.0;
                        for (int64_t j = 0; j < n; ++j) dot += go[i * n + j] * y.at(i, j);
                        for (int64_t j = 0; j < n; ++j)
                            g[static_cast<size_t>(i * n + j)] += y.at(i, j) * (go[i * n + j] - dot);
                    }
                }
                break;
            }
            case Op::concat_cols: {
                int64_t off = 0;
                for (size_t p = 0; p < s.inputs.size(); ++p) {
                    int64_t len = s.attr_shape[p];
                    if (s.inputs[p] >= 0) {
                        auto& g = grad_of(s.inputs[p]);
                        for (int64_t i = 0; i < len; ++i) g[static_cast<size_t>(i)] += go[off + i];
                    }
                    off += len;
                }
                break;
            }
            case Op::sum_all: {
                if (s.inputs[0] >= 0) {
                    auto& g = grad_of(s.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i) g[i] += go[0];
                }
                break;
            }
            case Op::mean_all: {
                if (s.inputs[0] >= 0) {
                    auto& g = grad_of(s.inputs[0]);
                    double scale = 1.0 / static_cast<double>(g.size());
                    for (size_t i = 0; i < g.size(); ++i) g[i] += go[0] * scale;
                }
                break;
            }
            case Op::reshape: {
                if (s.inputs[0] >= 0) {
                    auto& g = grad_of(s.inputs[0]);
                    for (size_t i = 0; i < g.size(); ++i) g[i] += go[i];
                }
                break;
            }
            case Op::slice: {
                if (s.inputs[0] >= 0) {
                    auto& g = grad_of(s.inputs[0]);
                    int64_t row = shape_numel(s.attr_shape) / s.attr_shape[0];
                    int64_t start = static_cast<int64_t>(s.attr);
                    int64_t len = static_cast<int64_t>(gout_v.size()) / row;
                    for (int64_t i = 0; i < len * row; ++i)
                        g[static_cast<size_t>(start * row + i)] += go[i];
                }
                break;
            }
            case Op::conv2d: {
                const Tensor& x = s.saved[0];
                const Tensor& kernel = s.saved[1];
                int64_t cin = x.dim(0), h = x.dim(1), w = x.dim(2), cout = kernel.dim(0);
                (void)oshape;
                if (s.inputs[1] >= 0) {
                    // dK (cout x cin*9) += dY (cout x hw) . patches (hw x cin*9)
                    std::vector<double> patches(static_cast<size_t>(h * w * cin * 9));
                    detail::im2col_3x3(x.data(), cin, h, w, patches.data());
                    auto& gk = grad_of(s.inputs[1]);
                    detail::matmul_accum(go, patches.data(), gk.data(), cout, h * w, cin * 9);
                }
                if (s.inputs[0] >= 0) {
                    // dPatches = dY^T . kernel, scattered back over the taps
                    std::vector<double> gpatches(static_cast<size_t>(h * w * cin * 9), 0.0);
                    detail::matmul_at_accum(go, kernel.data(), gpatches.data(), cout, h * w,
                                            cin * 9);
                    auto& gx = grad_of(s.inputs[0]);
                    for (int64_t i = 0; i < h; ++i) {
                        for (int64_t j = 0; j < w; ++j) {
                            const double* row = gpatches.data() + (i * w + j) * cin * 9;
                            for (int64_t ci = 0; ci < cin; ++ci) {
                                double* gxc = gx.data() + ci * h * w;
                                for (int64_t di = -1; di <= 1; ++di) {
                                    for (int64_t dj = -1; dj <= 1; ++dj) {
                                        int64_t ii = i + di, jj = j + dj;
                                        if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
                                        gxc[ii * w + jj] += row[ci * 9 + (di + 1) * 3 + (dj + 1)];
                                    }
                                }
                            }
                        }
                    }
                }
                if (s.inputs[2] >= 0) {
                    auto& gb = grad_of(s.inputs[2]);
                    for (int64_t co = 0; co < cout; ++co) {
                        double acc = 0.0;
                        const double* gochan = go + co * h * w;
                        for (int64_t i = 0; i < h * w; ++i) acc += gochan[i];
                        gb[static_cast<size_t>(co)] += acc;
                    }
                }
                break;
            }
        }
    }

    Gradients result;
    result.ids_ = ids_;
    result.shapes_.reserve(nodes_.size());
    for (const Node& nd : nodes_) result.shapes_.push_back(nd.shape);
    for (size_t id = 0; id < nodes_.size(); ++id) {
        if (!grads[id].empty())
            result.grads_.emplace(static_cast<int>(id), Tensor(nodes_[id].shape, std::move(grads[id])));
    }
    return result;
}

}  // namespace gapcast
