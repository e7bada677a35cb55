// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtclip/grad_check.hpp"

#include "vtclip/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace vtclip {

namespace {

double checked_eval(const ScalarFunction& f, std::span<const double> x, std::size_t coord) {
    const double v = f(x);
    if (!std::isfinite(v)) {
        throw NonFiniteValue("grad_check: non-finite function value while probing coordinate " +
                             std::to_string(coord));
    }
    return v;
}

}  // namespace

std::vector<double> numeric_gradient(const ScalarFunction& f, std::span<const double> theta,
                                     double step) {
    std::vector<double> x(theta.begin(), theta.end());
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double up = checked_eval(f, x, i);
        x[i] = saved - step;
        const double down = checked_eval(f, x, i);
        x[i] = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

GradCheckResult grad_check(const ScalarFunction& f, std::span<const double> theta,
                           std::span<const double> analytic, double step) {
    if (analytic.size() != theta.size()) {
        throw DimensionError("grad_check: gradient length " + std::to_string(analytic.size()) +
                             " vs parameter length " + std::to_string(theta.size()));
    }
    checked_eval(f, theta, 0);
    const auto numeric = numeric_gradient(f, theta, step);
    GradCheckResult result;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double a = analytic[i];
        const double n = numeric[i];
        const double rel = std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
        if (rel > result.max_rel_error || i == 0) {
            result = {rel, i, a, n};
        }
    }
    return result;
}

}  // namespace vtclip
