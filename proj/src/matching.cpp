// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtclip/matching.hpp"

#include "vtclip/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vtclip {

namespace {

void require_scale(double s) {
    if (!(s > 0.0) || !std::isfinite(s)) {
        throw std::invalid_argument("logit_scale must be positive and finite");
    }
}

double row_norm(std::span<const double> r) {
    double sq = 0.0;
    for (double v : r) {
        sq += v * v;
    }
    if (std::isfinite(sq) && sq > 0.0) {
        return std::sqrt(sq);
    }
    // Overflowed or underflowed: rescale by the largest magnitude.
    double m = 0.0;
    for (double v : r) {
        m = std::max(m, std::abs(v));
    }
    if (!(m > 0.0) || !std::isfinite(m)) {
        return m;
    }
    sq = 0.0;
    for (double v : r) {
        sq += (v / m) * (v / m);
    }
    return m * std::sqrt(sq);
}

}  // namespace

Matrix Logits::probabilities() const { return softmax_rows(scores); }

Matrix normalize_rows(const Matrix& x) {
    Matrix out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        const double n = row_norm(r);
        if (!(n > 0.0) || !std::isfinite(n)) {
            throw DegenerateFeature("normalize_rows: row " + std::to_string(i) +
                                    " has zero or non-finite norm");
        }
        for (auto& v : r) {
            v /= n;
        }
    }
    return out;
}

Logits zero_shot_logits(const Matrix& global, const Matrix& text, double logit_scale) {
    require_scale(logit_scale);
    if (global.cols() != text.cols()) {
        throw DimensionError("zero_shot_logits: global " + global.shape_string() + " vs text " +
                             text.shape_string());
    }
    return {matmul_nt(normalize_rows(global), normalize_rows(text)) * logit_scale, logit_scale};
}

Logits vt_logits(const Matrix& global, std::span<const Matrix> adapted_text, double logit_scale) {
    require_scale(logit_scale);
    if (adapted_text.size() != global.rows()) {
        throw DimensionError("vt_logits: " + std::to_string(adapted_text.size()) +
                             " adapted text matrices for " + global.shape_string() + " globals");
    }
    const Matrix g = normalize_rows(global);
    const std::size_t k = adapted_text.empty() ? 0 : adapted_text.front().rows();
    Logits out{Matrix(global.rows(), k), logit_scale};
    for (std::size_t i = 0; i < g.rows(); ++i) {
        const Matrix& vt = adapted_text[i];
        if (vt.rows() != k || vt.cols() != global.cols()) {
            throw DimensionError("vt_logits: adapted text " + vt.shape_string() + " for image " +
                                 std::to_string(i) + " does not match [" + std::to_string(k) +
                                 "x" + std::to_string(global.cols()) + "]");
        }
        // Same product as zero_shot_logits so identical inputs give identical bits.
        const Matrix row = matmul_nt(slice(g, i, i + 1, 0, g.cols()), normalize_rows(vt));
        for (std::size_t c = 0; c < k; ++c) {
            out.scores(i, c) = row(0, c) * logit_scale;
        }
    }
    return out;
}

Matrix vt_logits_backward(std::span<const double> global_row, const Matrix& adapted_text,
                          double logit_scale, std::span<const double> d_scores) {
    if (global_row.size() != adapted_text.cols() || d_scores.size() != adapted_text.rows()) {
        throw DimensionError("vt_logits_backward: shapes disagree with " +
                             adapted_text.shape_string());
    }
    const double gn = row_norm(global_row);
    if (!(gn > 0.0)) {
        throw DegenerateFeature("vt_logits_backward: zero global feature");
    }
    Matrix d(adapted_text.rows(), adapted_text.cols());
    for (std::size_t k = 0; k < adapted_text.rows(); ++k) {
        auto t = adapted_text.row(k);
        const double tn = row_norm(t);
        if (!(tn > 0.0)) {
            throw DegenerateFeature("vt_logits_backward: zero adapted text row " +
                                    std::to_string(k));
        }
        double cos = 0.0;
        for (std::size_t j = 0; j < t.size(); ++j) {
            cos += (global_row[j] / gn) * (t[j] / tn);
        }
        const double coef = logit_scale * d_scores[k] / tn;
        auto out = d.row(k);
        for (std::size_t j = 0; j < t.size(); ++j) {
            out[j] = coef * (global_row[j] / gn - cos * t[j] / tn);
        }
    }
    return d;
}

CrossEntropy cross_entropy(const Logits& logits, std::span<const std::uint32_t> labels) {
    const Matrix& s = logits.scores;
    if (labels.size() != s.rows()) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                             " labels for scores " + s.shape_string());
    }
    if (s.rows() == 0) {
        throw DimensionError("cross_entropy: empty batch");
    }
    const double inv_b = 1.0 / static_cast<double>(s.rows());
    CrossEntropy ce{0.0, softmax_rows(s)};
    for (std::size_t i = 0; i < s.rows(); ++i) {
        const std::uint32_t y = labels[i];
        if (y >= s.cols()) {
            throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " at row " +
                                    std::to_string(i) + " outside [0, " +
                                    std::to_string(s.cols()) + ")");
        }
        // log-sum-exp on the raw row keeps tiny probabilities exact.
        auto r = s.row(i);
        double m = r[0];
        for (double v : r) {
            m = std::max(m, v);
        }
        double sum = 0.0;
        for (double v : r) {
            sum += std::exp(v - m);
        }
        ce.loss += (m + std::log(sum) - r[y]) * inv_b;
        auto d = ce.d_scores.row(i);
        d[y] -= 1.0;
        for (auto& v : d) {
            v *= inv_b;
        }
    }
    return ce;
}

std::vector<std::uint32_t> predict(const Logits& logits) {
    const Matrix& s = logits.scores;
    std::vector<std::uint32_t> out(s.rows(), 0);
    for (std::size_t i = 0; i < s.rows(); ++i) {
        auto r = s.row(i);
        std::size_t best = 0;
        for (std::size_t k = 1; k < r.size(); ++k) {
            if (r[k] > r[best]) {
                best = k;
            }
        }
        out[i] = static_cast<std::uint32_t>(best);
    }
    return out;
}

double accuracy(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth) {
    if (predicted.size() != truth.size()) {
        throw DimensionError("accuracy: " + std::to_string(predicted.size()) + " predictions vs " +
                             std::to_string(truth.size()) + " labels");
    }
    if (truth.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        hits += predicted[i] == truth[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace vtclip
