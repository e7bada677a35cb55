// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace vtclip {

using ScalarFunction = std::function<double(std::span<const double>)>;

class NonFiniteValue : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares `analytic` against central differences of `f` at `theta`.
/// Per coordinate: |a - n| / max(1e-8, |a| + |n|); the maximum is reported.
/// Throws NonFiniteValue if f is not finite at any probe point.
GradCheckResult grad_check(const ScalarFunction& f, std::span<const double> theta,
                           std::span<const double> analytic, double step = 1e-5);

/// Central-difference gradient of f at theta.
std::vector<double> numeric_gradient(const ScalarFunction& f, std::span<const double> theta,
                                     double step = 1e-5);

}  // namespace vtclip
