#pragma once

#include "dst/tape.hpp"

#include <functional>
#include <span>
#include <vector>

namespace dst::ad {

/// Builds a scalar on `tape` from the variables bound to the checked parameters.
using ScalarExpression = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/**
 * Compares reverse-mode gradients against central differences.
 *
 * For each entry the error is |analytic - numeric| / max(1e-12, |analytic| + |numeric|);
 * the report holds the worst entry. Parameter values are restored on return.
 * Throws NumericError naming the parameter and entry when a non-finite value shows up.
 */
GradCheckReport grad_check_report(const ScalarExpression& f, std::span<Tensor* const> params, double eps = 1e-6);

[[nodiscard]] double grad_check(const ScalarExpression& f, std::span<Tensor* const> params, double eps = 1e-6);

}  // namespace dst::ad
