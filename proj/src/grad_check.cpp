#include "dst/grad_check.hpp"

#include "dst/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dst::ad {

namespace {

double evaluate_scalar(const ScalarExpression& f, std::span<Tensor* const> params) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (Tensor* p : params) vars.push_back(tape.leaf(*p));
    const Var out = f(tape, vars);
    const Tensor& v = tape.value(out);
    if (v.size() != 1) throw ContractError("grad_check: expression is not scalar-valued");
    return v[0];
}

}  // namespace

GradCheckReport grad_check_report(const ScalarExpression& f, std::span<Tensor* const> params, double eps) {
    if (!(eps > 0.0)) throw ContractError("grad_check: step must be positive");

    std::vector<bool> saved_flags;
    for (Tensor* p : params) {
        saved_flags.push_back(p->requires_grad());
        p->set_requires_grad(true);
    }

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (Tensor* p : params) vars.push_back(tape.leaf(*p));
        const Var loss = f(tape, vars);
        tape.backward(loss);
        for (Tensor* p : params) analytic.push_back(p->grad());
    }

    GradCheckReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double original = p[i];
            p[i] = original + eps;
            const double plus = evaluate_scalar(f, params);
            p[i] = original - eps;
            const double minus = evaluate_scalar(f, params);
            p[i] = original;

            const double a = analytic[k][i];
            const double n = (plus - minus) / (2.0 * eps);
            if (!std::isfinite(a) || !std::isfinite(n)) {
                for (std::size_t j = 0; j < params.size(); ++j) params[j]->set_requires_grad(saved_flags[j]);
                throw NumericError("grad_check: non-finite value at parameter " + std::to_string(k) + " entry " +
                                   std::to_string(i));
            }
            const double err = std::abs(a - n) / std::max(1e-12, std::abs(a) + std::abs(n));
            if (err > report.max_rel_error) {
                report = {err, k, i, a, n};
            }
        }
    }
    for (std::size_t j = 0; j < params.size(); ++j) params[j]->set_requires_grad(saved_flags[j]);
    return report;
}

double grad_check(const ScalarExpression& f, std::span<Tensor* const> params, double eps) {
    return grad_check_report(f, params, eps).max_rel_error;
}

}  // namespace dst::ad
