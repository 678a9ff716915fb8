#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sicnn/autodiff.hpp"

namespace sicnn {

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t coordinates = 0;
    bool passed = false;
};

struct GradCheckOptions {
    double tolerance = 1e-5;
    std::size_t max_coords = 40;  // per input; all coordinates when smaller
    std::uint64_t seed = 0;
};

/// |a - n| / max(1, |a|, |n|)
double gradient_relative_error(double analytic, double numeric);

/// Compares backprop against central differences for a random-weighted sum of
/// build()'s output. Every input must be a leaf that requires grad; build()
/// must recompute the output from the current input values.
GradCheckResult check_gradients(const std::string& name, const std::vector<Var>& inputs,
                                const std::function<Var()>& build, const GradCheckOptions& options);

/// Every differentiable op, the three losses and a small CNN_H -> CNN_R
/// composite. inject_fault corrupts one backward pass so callers can confirm
/// failures are caught.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, bool inject_fault = false);

void write_gradcheck_table(const std::vector<GradCheckResult>& results, std::ostream& os);

}  // namespace sicnn
