#pragma once

#include <cmath>
#include <vector>

#include "calica/nn/tensor.hpp"

namespace calica::nn {

/// Bias-corrected Adam. Moment buffers are allocated on the first step and
/// stay aligned with the parameter list by index; frozen parameters keep
/// empty slots.
template <class T>
struct AdamState {
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
};

template <class T>
void adam_step(std::vector<NamedParam<T>>& params, AdamState<T>& state) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i)
            if (params[i].tensor.requires_grad()) {
                state.m[i].assign(params[i].tensor.numel(), T(0));
                state.v[i].assign(params[i].tensor.numel(), T(0));
            }
    }
    if (state.m.size() != params.size())
        throw UserError("adam_step: state does not match parameter list");

    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].tensor;
        if (!p.requires_grad()) continue;
        const auto& g = p.grad();
        auto& value = p.values();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t j = 0; j < value.size(); ++j) {
            T gj = g[j];
            if (!std::isfinite(static_cast<double>(gj)))
                throw UserError("adam_step: non-finite gradient in parameter '" +
                                params[i].name + "'");
            m[j] = static_cast<T>(state.beta1) * m[j] + static_cast<T>(1.0 - state.beta1) * gj;
            v[j] = static_cast<T>(state.beta2) * v[j] + static_cast<T>(1.0 - state.beta2) * gj * gj;
            double mhat = static_cast<double>(m[j]) / bc1;
            double vhat = static_cast<double>(v[j]) / bc2;
            value[j] -= static_cast<T>(state.lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

}  // namespace calica::nn
