#pragma once

#include <string>
#include <vector>

namespace calica::nn {

struct SuiteResult {
    std::string op;
    double max_rel_err = 0.0;
};

/// Finite-difference verification of every differentiable operation plus
/// the fully composed network loss, each repeated over n_seeds random
/// draws. Worst relative error per operation.
std::vector<SuiteResult> gradcheck_suite(int n_seeds = 10, std::uint64_t seed0 = 1);

}  // namespace calica::nn
