#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "almt/errors.hpp"
#include "almt/tape.hpp"
#include "almt/tensor.hpp"

namespace almt {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central-difference gradient check. The analytic side runs `f` once on a
// recording tape and replays it backward. The numeric side perturbs each
// element of `eval_params` by +-h and re-evaluates `f_eval`, which must
// compute the same mathematical function of the mirrored parameter values;
// evaluating it at a higher precision E keeps the difference quotient's
// rounding noise far below the comparison tolerance. Both functions must be
// deterministic. The relative error per element is
// |analytic - numeric| / max(|numeric|, 1e-8), maximized over all elements.
template <typename T, typename E>
GradCheckResult finite_diff_check_against(const std::function<TensorT<T>(TapeT<T>&)>& f,
                                          std::vector<TensorT<T>> params,
                                          const std::function<TensorT<E>(TapeT<E>&)>& f_eval,
                                          std::vector<TensorT<E>> eval_params, double h) {
    if (h < 1e-4 || h > 1e-2)
        throw ValidationError("finite_diff_check: h must lie in [1e-4, 1e-2]");
    if (params.size() != eval_params.size())
        throw ValidationError("finite_diff_check: parameter lists differ in size");

    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        TapeT<T> tape;
        TensorT<T> loss = f(tape);
        tape.backward(loss);
        for (auto& p : params) {
            std::vector<double> g(static_cast<std::size_t>(p.numel()));
            for (std::int64_t i = 0; i < p.numel(); ++i)
                g[static_cast<std::size_t>(i)] = static_cast<double>(p.grad()[i]);
            analytic.push_back(std::move(g));
        }
    }

    auto eval = [&]() -> double {
        TapeT<E> tape(false);
        return static_cast<double>(f_eval(tape).item());
    };

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        TensorT<E>& p = eval_params[pi];
        if (p.numel() != params[pi].numel())
            throw ValidationError("finite_diff_check: parameter " + std::to_string(pi) +
                                  " size mismatch between precisions");
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const E saved = p.data()[i];
            const E plus = static_cast<E>(static_cast<double>(saved) + h);
            const E minus = static_cast<E>(static_cast<double>(saved) - h);
            p.data()[i] = plus;
            const double f_plus = eval();
            p.data()[i] = minus;
            const double f_minus = eval();
            p.data()[i] = saved;
            // divide by the step actually applied after rounding to E
            const double applied = static_cast<double>(plus) - static_cast<double>(minus);
            const double numeric = (f_plus - f_minus) / applied;
            const double a = analytic[pi][static_cast<std::size_t>(i)];
            const double rel = std::abs(a - numeric) / std::max(std::abs(numeric), 1e-8);
            if (rel >= result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_param = params[pi].name().empty()
                                         ? ("param" + std::to_string(pi))
                                         : params[pi].name();
                result.worst_index = i;
                result.worst_analytic = a;
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

// Single-precision check: numeric and analytic sides share the parameters.
template <typename T>
GradCheckResult finite_diff_check(const std::function<TensorT<T>(TapeT<T>&)>& f,
                                  std::vector<TensorT<T>> params, double h = 1e-3) {
    return finite_diff_check_against<T, T>(f, params, f, params, h);
}

} // namespace almt
