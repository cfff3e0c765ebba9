#pragma once

// Central-difference gradient verification for any scalar-valued function of
// a set of tensors.

#include <cmath>
#include <functional>
#include <vector>

#include "gapcast/tensor.hpp"

namespace gapcast {

// Compares reverse-mode gradients of scalar_fn against central differences
// over every coordinate of every tensor in params. scalar_fn must rebuild its
// graph from the current parameter values on each call. Returns the maximum
// relative error |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline double grad_check(const std::function<Tensor()>& scalar_fn, std::vector<Tensor> params,
                         double epsilon) {
    std::vector<Tensor> analytic;
    {
        Tape tape;
        Tensor root = scalar_fn();
        Gradients grads = tape.backward(root);
        for (const Tensor& p : params) analytic.push_back(grads.of(p));
    }

    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        for (int64_t i = 0; i < p.numel(); ++i) {
            double saved = p.at(i);
            p.at(i) = saved + epsilon;
            double up = scalar_fn().scalar_value();
            p.at(i) = saved - epsilon;
            double down = scalar_fn().scalar_value();
            p.at(i) = saved;
            double numeric = (up - down) / (2.0 * epsilon);
            double a = analytic[pi].at(i);
            double err = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace gapcast
