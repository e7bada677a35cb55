// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vtclip/matrix.hpp"

#include <span>

namespace vtclip {

inline constexpr double kLayerNormEps = 1e-5;

/// out[i] = x[i] · w + b
Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b);

struct AffineGrads {
    Matrix dx;
    Matrix dw;
    Vector db;
};

/// Backward of affine given the upstream gradient dy = ∂L/∂out.
AffineGrads affine_backward(const Matrix& x, const Matrix& w, const Matrix& dy);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& x);

/// Given y = softmax_rows(x) and dy, returns dx.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

/// Per-row normalization state kept for the backward pass.
struct LayerNormCache {
    Matrix normalized;   // (x - mean) / sqrt(var + eps)
    Vector inv_std;      // one per row
};

/// Population-variance layer norm with eps inside the square root.
Matrix layer_norm(const Matrix& x, std::span<const double> gamma, std::span<const double> beta,
                  double eps = kLayerNormEps, LayerNormCache* cache = nullptr);

struct LayerNormGrads {
    Matrix dx;
    Vector dgamma;
    Vector dbeta;
};

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, std::span<const double> gamma,
                                   const Matrix& dy);

Matrix relu(const Matrix& x);

/// Gradient passes where the forward input was strictly positive.
Matrix relu_backward(const Matrix& x, const Matrix& dy);

}  // namespace vtclip
