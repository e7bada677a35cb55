// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vtclip/matrix.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace vtclip {

/// CLIP's converged 1/τ; held fixed.
inline constexpr double kDefaultLogitScale = 100.0;

class DegenerateFeature : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Logits {
    Matrix scores;  // B x K, pre-softmax
    double logit_scale = kDefaultLogitScale;

    Matrix probabilities() const;
};

/// L2-normalizes every row. Throws DegenerateFeature on a zero row.
Matrix normalize_rows(const Matrix& x);

/// scores = scale · normalize(V_c) · normalize(T_c)ᵀ
Logits zero_shot_logits(const Matrix& global, const Matrix& text, double logit_scale);

/// score[i,k] = scale · ⟨normalize(V_c[i]), normalize(VT_c⁽ⁱ⁾[k])⟩, one
/// adapted text matrix per image.
Logits vt_logits(const Matrix& global, std::span<const Matrix> adapted_text, double logit_scale);

/// Gradient of one image's score row with respect to its adapted text
/// matrix, given d_scores (1 x K) for that row.
Matrix vt_logits_backward(std::span<const double> global_row, const Matrix& adapted_text,
                          double logit_scale, std::span<const double> d_scores);

struct CrossEntropy {
    double loss = 0.0;
    Matrix d_scores;  // (softmax - one_hot) / B
};

/// Mean over the batch of -log softmax(score)[label].
CrossEntropy cross_entropy(const Logits& logits, std::span<const std::uint32_t> labels);

/// Row-wise argmax; ties go to the lowest class index.
std::vector<std::uint32_t> predict(const Logits& logits);

double accuracy(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth);

}  // namespace vtclip
