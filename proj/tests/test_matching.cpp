// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "test_support.hpp"

#include "vtclip/grad_check.hpp"
#include "vtclip/matching.hpp"
#include "vtclip/vt_attention.hpp"

#include <cmath>
#include <numeric>
#include <vector>

using namespace vtclip;
using vtclip::testing::random_matrix;

namespace {

// Scalar loops over raw rows: scale * <x/|x|, t/|t|>.
double cosine_score(std::span<const double> x, std::span<const double> t, double scale) {
    double dot = 0.0, nx = 0.0, nt = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        dot += x[j] * t[j];
        nx += x[j] * x[j];
        nt += t[j] * t[j];
    }
    return scale * dot / (std::sqrt(nx) * std::sqrt(nt));
}

}  // namespace

TEST_CASE("zero_shot_logits orthogonal case") {
    const Logits l = zero_shot_logits(Matrix{{1, 0}}, Matrix{{1, 0}, {0, 1}}, 100.0);
    CHECK(l.scores == Matrix{{100, 0}});
    const Matrix p = l.probabilities();
    CHECK(p(0, 0) == doctest::Approx(1.0));
    CHECK(p(0, 1) == doctest::Approx(3.7e-44).epsilon(0.01));
    CHECK(std::abs(p(0, 1) - std::exp(-100.0) / (1 + std::exp(-100.0))) < 1e-58);
}

TEST_CASE("zero_shot_logits matches a scalar oracle and ignores feature scale") {
    Rng rng(1);
    const Matrix v = random_matrix(rng, 6, 5);
    const Matrix t = random_matrix(rng, 4, 5);
    const Logits l = zero_shot_logits(v, t, 100.0);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(std::abs(l.scores(i, k) - cosine_score(v.row(i), t.row(k), 100.0)) < 1e-12);
    for (double c : {0.01, 3.0, 1e4}) CHECK(max_abs_diff(zero_shot_logits(v * c, t, 100.0).scores, l.scores) < 1e-12);
}

TEST_CASE("single class has probability one") {
    Rng rng(2);
    const Logits l = zero_shot_logits(random_matrix(rng, 3, 4), random_matrix(rng, 1, 4), 100.0);
    const Matrix p = l.probabilities();
    for (double v : p.values()) CHECK(v == 1.0);
}

TEST_CASE("degenerate rows are rejected") {
    CHECK_THROWS_AS(zero_shot_logits(Matrix{{0, 0}}, Matrix{{1, 0}}, 100.0), DegenerateFeature);
    CHECK_THROWS_AS(zero_shot_logits(Matrix{{1, 0}}, Matrix{{1, 0}, {0, 0}}, 100.0), DegenerateFeature);
    const std::vector<Matrix> adapted{Matrix{{0, 0}}};
    CHECK_THROWS_AS(vt_logits(Matrix{{1, 0}}, adapted, 100.0), DegenerateFeature);
    CHECK_THROWS_AS(normalize_rows(Matrix{{0, 0, 0}}), DegenerateFeature);
}

TEST_CASE("normalize_rows is idempotent") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix x = random_matrix(rng, 4, 7, 1.0 + 100.0 * rng.uniform());
        const Matrix n = normalize_rows(x);
        CHECK(max_abs_diff(normalize_rows(n), n) < 1e-12);
    }
}

TEST_CASE("normalize_rows handles extreme magnitudes") {
    const double h = std::sqrt(0.5);
    for (double s : {1e200, 1e-200}) {
        const Matrix n = normalize_rows(Matrix{{s, s}});
        CHECK(std::abs(n(0, 0) - h) < 1e-15);
        CHECK(std::abs(n(0, 1) - h) < 1e-15);
    }
    CHECK_THROWS_AS(normalize_rows(Matrix{{std::nan(""), 1.0}}), DegenerateFeature);
}

TEST_CASE("vt_logits matches a per-image scalar oracle") {
    Rng rng(4);
    const Matrix v = random_matrix(rng, 3, 5);
    std::vector<Matrix> adapted;
    for (int i = 0; i < 3; ++i) adapted.push_back(random_matrix(rng, 4, 5));
    const Logits l = vt_logits(v, adapted, 50.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(std::abs(l.scores(i, k) - cosine_score(v.row(i), adapted[i].row(k), 50.0)) < 1e-12);
    CHECK_THROWS_AS(vt_logits(v, std::span(adapted).first(2), 50.0), DimensionError);
}

TEST_CASE("zero-init vt_logits equal zero-shot logits") {
    Rng rng(5);
    const VTParams p = init_params(8, 6, 2, 2, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix text = random_matrix(rng, 5, 8);
        const Matrix v = random_matrix(rng, 4, 8);
        std::vector<Matrix> adapted;
        for (int i = 0; i < 4; ++i) adapted.push_back(vt_forward(text, random_matrix(rng, 9, 6), p).output);
        const Logits a = vt_logits(v, adapted, 100.0);
        const Logits b = zero_shot_logits(v, text, 100.0);
        CHECK(max_abs_diff(a.scores, b.scores) < 1e-12);
    }
}

TEST_CASE("argmax is invariant to the logit scale") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix v = random_matrix(rng, 8, 6);
        std::vector<Matrix> adapted;
        for (int i = 0; i < 8; ++i) adapted.push_back(random_matrix(rng, 5, 6));
        const auto base = predict(vt_logits(v, adapted, 1.0));
        CHECK(predict(vt_logits(v, adapted, 50.0)) == base);
        CHECK(predict(vt_logits(v, adapted, 100.0)) == base);
        const Matrix p1 = vt_logits(v, adapted, 1.0).probabilities();
        const Matrix p100 = vt_logits(v, adapted, 100.0).probabilities();
        CHECK(max_abs_diff(p1, p100) > 1e-3);
    }
}

TEST_CASE("cross_entropy") {
    SUBCASE("uniform scores") {
        Logits l{Matrix(2, 4, 0.5), 100.0};
        const std::vector<std::uint32_t> labels{1, 3};
        const auto ce = cross_entropy(l, labels);
        CHECK(std::abs(ce.loss - std::log(4.0)) < 1e-12);
        CHECK(ce.d_scores(0, 0) == doctest::Approx(0.25 / 2));
        CHECK(ce.d_scores(0, 1) == doctest::Approx(-0.75 / 2));
    }
    SUBCASE("concentrated scores") {
        Logits l{Matrix{{0, 200, 0}}, 100.0};
        const std::vector<std::uint32_t> labels{1};
        CHECK(cross_entropy(l, labels).loss < 1e-80);
        Logits wrong{Matrix{{0, -800, 0}}, 100.0};
        const auto ce = cross_entropy(wrong, labels);
        CHECK(std::isfinite(ce.loss));
        CHECK(ce.loss == doctest::Approx(800 + std::log(2.0)));
    }
    SUBCASE("gradient matches finite differences") {
        Rng rng(7);
        const std::size_t b = 3, k = 5;
        const Matrix scores = random_matrix(rng, b, k);
        const std::vector<std::uint32_t> labels{4, 0, 2};
        const auto ce = cross_entropy(Logits{scores, 100.0}, labels);
        const ScalarFunction f = [&](std::span<const double> t) {
            return cross_entropy(Logits{Matrix(b, k, {t.begin(), t.end()}), 100.0}, labels).loss;
        };
        const auto r = grad_check(f, scores.values(), ce.d_scores.values());
        INFO(r.worst_index << " " << r.worst_analytic << " " << r.worst_numeric);
        CHECK(r.max_rel_error < 1e-6);
    }
    SUBCASE("invalid labels") {
        Logits l{Matrix(2, 3), 100.0};
        const std::vector<std::uint32_t> bad{0, 3};
        CHECK_THROWS_AS(cross_entropy(l, bad), std::out_of_range);
        const std::vector<std::uint32_t> short_labels{0};
        CHECK_THROWS_AS(cross_entropy(l, short_labels), DimensionError);
    }
}

TEST_CASE("vt_logits_backward matches finite differences") {
    Rng rng(8);
    const Matrix v = random_matrix(rng, 1, 6);
    const Matrix adapted = random_matrix(rng, 4, 6);
    const Matrix d_scores = random_matrix(rng, 1, 4);
    const Matrix grad = vt_logits_backward(v.row(0), adapted, 100.0, d_scores.row(0));
    const ScalarFunction f = [&](std::span<const double> t) {
        const std::vector<Matrix> a{Matrix(4, 6, {t.begin(), t.end()})};
        const Logits l = vt_logits(v, a, 100.0);
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += l.scores(0, k) * d_scores(0, k);
        return s;
    };
    CHECK(grad_check(f, adapted.values(), grad.values()).max_rel_error < 1e-6);
}

TEST_CASE("predict and accuracy") {
    SUBCASE("diagonal scores") {
        const Logits l{Matrix{{9, 1, 1}, {1, 9, 1}, {1, 1, 9}}, 1.0};
        const auto pred = predict(l);
        const std::vector<std::uint32_t> truth{0, 1, 2};
        CHECK(accuracy(pred, truth) == 1.0);
    }
    SUBCASE("ties go to the lowest index") {
        const Logits l{Matrix{{3, 3, 3}, {0, 5, 5}}, 1.0};
        CHECK(predict(l) == std::vector<std::uint32_t>{0, 1});
    }
    SUBCASE("class permutation permutes predictions") {
        Rng rng(9);
        const Matrix v = random_matrix(rng, 20, 4);
        const Matrix t = random_matrix(rng, 6, 4);
        const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};  // new row r is old class perm[r]
        Matrix tp(6, 4);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t j = 0; j < 4; ++j) tp(r, j) = t(perm[r], j);
        const auto a = predict(zero_shot_logits(v, t, 100.0));
        const auto b = predict(zero_shot_logits(v, tp, 100.0));
        for (std::size_t i = 0; i < 20; ++i) CHECK(perm[b[i]] == a[i]);
    }
    SUBCASE("partial accuracy") {
        const std::vector<std::uint32_t> pred{0, 1, 1, 0};
        const std::vector<std::uint32_t> truth{0, 1, 0, 1};
        CHECK(accuracy(pred, truth) == 0.5);
        const std::vector<std::uint32_t> shorter{0};
        CHECK_THROWS(accuracy(pred, shorter));
    }
}
