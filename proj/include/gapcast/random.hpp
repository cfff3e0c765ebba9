#pragma once

// Seeded randomness with hand-rolled draw functions. std::shuffle and the
// standard distributions are implementation-defined, so every draw here is
// pinned to the mt19937_64 bit stream to keep runs reproducible.

#include <cstdint>
#include <random>
#include <vector>

#include "gapcast/tensor.hpp"

namespace gapcast {

inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; one draw per call, no cached spare (keeps streams simple).
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return eng_() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<size_t> permutation(size_t n) {
        std::vector<size_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    // Symmetric uniform init scaled by fan-in/fan-out.
    Tensor glorot(Shape shape, int64_t fan_in, int64_t fan_out, bool requires_grad = true) {
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor t = Tensor::zeros(shape, requires_grad);
        for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = uniform(-limit, limit);
        return t;
    }

    Tensor uniform_tensor(Shape shape, double lo, double hi, bool requires_grad = true) {
        Tensor t = Tensor::zeros(shape, requires_grad);
        for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = uniform(lo, hi);
        return t;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace gapcast
