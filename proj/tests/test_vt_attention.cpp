// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "oracles/reference_decoder.hpp"
#include "test_support.hpp"

#include "vtclip/checkpoint.hpp"
#include "vtclip/grad_check.hpp"
#include "vtclip/vt_attention.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

using namespace vtclip;
using vtclip::testing::random_matrix;
using vtclip::testing::random_params;
using vtclip::testing::TempDir;

namespace {

double weighted_sum(const Matrix& a, const Matrix& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * g.values()[i];
    return s;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(perm[i], j);
    return out;
}

AttentionWeights identity_attention(std::size_t d) {
    AttentionWeights w;
    w.w_q = w.w_k = w.w_v = w.w_o = Matrix::identity(d);
    w.b_q = w.b_k = w.b_v = w.b_o = Vector(d, 0.0);
    return w;
}

/// Closed-form count straight from the layer description.
std::size_t expected_parameter_count(std::size_t d, std::size_t ds, std::size_t layers) {
    const std::size_t self_attn = 4 * (d * d + d);
    const std::size_t cross_attn = (d * d + d) + 2 * (ds * d + d) + (d * d + d);
    const std::size_t ffn = (d * 4 * d + 4 * d) + (4 * d * d + d);
    const std::size_t norms = 3 * 2 * d;
    return layers * (self_attn + cross_attn + ffn + norms);
}

void check_gradients(std::size_t layers) {
    const std::size_t k = 3, s = 4, d = 8, ds = 6, h = 2;
    Rng rng(100 + layers);
    const Matrix text = random_matrix(rng, k, d);
    const Matrix spatial = random_matrix(rng, s, ds);
    const Matrix g = random_matrix(rng, k, d);
    const VTParams params = random_params(d, ds, h, layers, 31 + layers);

    ForwardCache cache;
    vt_forward(text, spatial, params, &cache);
    const VTBackward back = vt_backward(g, cache, params);

    // Per tensor so a failure names the offending matrix.
    std::map<std::string, std::vector<double>> analytic;
    for_each_tensor(back.grads, [&](const std::string& name, std::span<const double> t) {
        analytic[name].assign(t.begin(), t.end());
    });
    std::size_t checked = 0;
    VTParams probe = params;
    for_each_tensor(probe, [&](const std::string& name, std::span<double> t) {
        const std::vector<double> base(t.begin(), t.end());
        const ScalarFunction f = [&](std::span<const double> theta) {
            std::copy(theta.begin(), theta.end(), t.begin());
            const double v = weighted_sum(vt_forward(text, spatial, probe).output, g);
            std::copy(base.begin(), base.end(), t.begin());
            return v;
        };
        const auto& a = analytic.at(name);
        if (name.ends_with(".b_k")) {
            // A key bias shifts a whole softmax row, so its gradient is exactly
            // zero and the relative error would only measure roundoff.
            const auto numeric = numeric_gradient(f, base);
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(std::abs(a[i]) < 1e-12);
                CHECK(std::abs(numeric[i]) < 1e-8);
            }
        } else {
            const auto r = grad_check(f, base, a);
            INFO(name << " worst index " << r.worst_index << " analytic " << r.worst_analytic
                      << " numeric " << r.worst_numeric);
            CHECK(r.max_rel_error < 1e-4);
        }
        ++checked;
    });
    CHECK(checked == layers * 26);

    const ScalarFunction ft = [&](std::span<const double> theta) {
        return weighted_sum(vt_forward(Matrix(k, d, {theta.begin(), theta.end()}), spatial, params).output, g);
    };
    CHECK(grad_check(ft, text.values(), back.d_text.values()).max_rel_error < 1e-4);
}

}  // namespace

TEST_CASE("init_params") {
    const VTParams a = init_params(32, 48, 4, 1, 5);
    const VTParams b = init_params(32, 48, 4, 1, 5);
    CHECK(a == b);
    CHECK(param_checksum(a) == param_checksum(b));
    CHECK(param_checksum(a) != param_checksum(init_params(32, 48, 4, 1, 6)));

    CHECK(a.parameter_count() == expected_parameter_count(32, 48, 1));
    CHECK(a.parameter_count() == 18016);
    CHECK(init_params(16, 8, 2, 3, 1).parameter_count() == expected_parameter_count(16, 8, 3));
    CHECK(flatten(a).size() == a.parameter_count());

    const auto& layer = a.layers[0];
    CHECK(layer.cross_attn.w_k.rows() == 48);
    CHECK(layer.cross_attn.w_k.cols() == 32);
    CHECK(layer.ffn.w_1.cols() == 128);
    CHECK(layer.self_attn.w_o == Matrix(32, 32));
    CHECK(layer.cross_attn.w_o == Matrix(32, 32));
    CHECK(layer.ffn.w_2 == Matrix(128, 32));
    CHECK(std::all_of(layer.ln_ffn.gamma.begin(), layer.ln_ffn.gamma.end(), [](double v) { return v == 1.0; }));

    // Xavier-uniform bound for a 48 -> 32 projection.
    const double limit = std::sqrt(6.0 / (48 + 32));
    double max_abs = 0.0;
    for (double v : layer.cross_attn.w_k.values()) max_abs = std::max(max_abs, std::abs(v));
    CHECK(max_abs <= limit);
    CHECK(max_abs > 0.8 * limit);

    CHECK_THROWS_AS(init_params(30, 48, 4, 1, 1), ConfigError);
    CHECK_THROWS_AS(init_params(32, 48, 0, 1, 1), ConfigError);
    CHECK_THROWS_AS(init_params(32, 48, 4, 0, 1), ConfigError);
}

TEST_CASE("flatten and unflatten are inverse") {
    const VTParams p = random_params(8, 6, 2, 2, 3);
    VTParams q = zeros_like(p);
    unflatten(flatten(p), q);
    CHECK(q == p);
    CHECK(zeros_like(p).parameter_count() == p.parameter_count());
}

TEST_CASE("zero-init head is the identity") {
    Rng rng(1);
    for (std::size_t layers : {1, 3}) {
        const VTParams p = init_params(16, 12, 4, layers, 9);
        for (int trial = 0; trial < 10; ++trial) {
            const Matrix text = random_matrix(rng, 5, 16);
            const Matrix spatial = random_matrix(rng, 9, 12, 5.0);
            CHECK(vt_forward(text, spatial, p).output == text);
        }
    }
}

TEST_CASE("multi_head_attention examples") {
    SUBCASE("single key") {
        const AttentionWeights w = identity_attention(3);
        const Matrix q{{1, 2, 3}, {-1, 0, 4}};
        const Matrix kv{{0.5, -2, 7}};
        const auto r = multi_head_attention(q, kv, kv, w, 1);
        CHECK(r.weights[0] == Matrix{{1}, {1}});
        CHECK(r.out == Matrix{{0.5, -2, 7}, {0.5, -2, 7}});
    }
    SUBCASE("two identical keys") {
        AttentionWeights w = identity_attention(4);
        w.w_v(0, 1) = 3.0;
        const Matrix q{{1, 2, 3, 4}};
        const Matrix kv{{1, 1, 0, 2}, {1, 1, 0, 2}};
        const auto r = multi_head_attention(q, kv, kv, w, 2);
        for (const auto& head : r.weights) CHECK(head == Matrix{{0.5, 0.5}});
        const Matrix projected = affine(kv, w.w_v, w.b_v);
        for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(r.out(0, j) - projected(0, j)) < 1e-15);
    }
    SUBCASE("scalar oracle") {
        // logits [1/sqrt2, 0]; weights e^a/(e^a+1) with a = 1/sqrt2.
        const double a = 1.0 / std::sqrt(2.0);
        const double w0 = std::exp(a) / (std::exp(a) + 1.0);
        CHECK(w0 == doctest::Approx(0.6698).epsilon(1e-4));
        const auto r = multi_head_attention(Matrix{{1, 0}}, Matrix{{1, 0}, {0, 1}},
                                            Matrix{{1, 0}, {0, 1}}, identity_attention(2), 1);
        CHECK(std::abs(r.weights[0](0, 0) - w0) < 1e-15);
        CHECK(std::abs(r.weights[0](0, 1) - (1 - w0)) < 1e-15);
        CHECK(std::abs(r.out(0, 0) - w0) < 1e-15);
        CHECK(std::abs(r.out(0, 1) - (1 - w0)) < 1e-15);
    }
    SUBCASE("shape mismatch") {
        const AttentionWeights w = identity_attention(4);
        CHECK_THROWS_AS(multi_head_attention(Matrix(1, 4), Matrix(2, 3), Matrix(2, 3), w, 2),
                        DimensionError);
        CHECK_THROWS_AS(multi_head_attention(Matrix(1, 4), Matrix(2, 4), Matrix(3, 4), w, 2),
                        DimensionError);
    }
}

TEST_CASE("vt_forward matches the reference decoder") {
    Rng rng(77);
    for (std::size_t layers : {1, 2}) {
        const VTParams p = random_params(8, 6, 2, layers, 40 + layers);
        const Matrix text = random_matrix(rng, 3, 8);
        const Matrix spatial = random_matrix(rng, 4, 6);
        const Matrix got = vt_forward(text, spatial, p).output;
        const auto want = oracle::reference_forward(text, spatial, p);
        double diff = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 8; ++j) diff = std::max(diff, std::abs(got(i, j) - want[i][j]));
        CHECK(diff < 1e-12);
    }
}

TEST_CASE("vt_forward symmetries") {
    Rng rng(8);
    const VTParams p = random_params(12, 10, 3, 2, 2);
    const Matrix text = random_matrix(rng, 5, 12);
    const Matrix spatial = random_matrix(rng, 7, 10);
    const Matrix base = vt_forward(text, spatial, p).output;

    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::size_t> perm(7);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span(perm));
        CHECK(max_abs_diff(vt_forward(text, permute_rows(spatial, perm), p).output, base) < 1e-12);

        std::vector<std::size_t> cls(5);
        std::iota(cls.begin(), cls.end(), 0);
        rng.shuffle(std::span(cls));
        const Matrix out = vt_forward(permute_rows(text, cls), spatial, p).output;
        CHECK(max_abs_diff(out, permute_rows(base, cls)) < 1e-12);
    }
}

TEST_CASE("attention rows sum to one in every layer and head") {
    Rng rng(9);
    const VTParams p = random_params(16, 8, 4, 3, 4, 1.0);
    const auto f = vt_forward(random_matrix(rng, 6, 16), random_matrix(rng, 9, 8, 3.0), p);
    REQUIRE(f.trace.cross.size() == 3);
    REQUIRE(f.trace.self.size() == 3);
    for (std::size_t l = 0; l < 3; ++l) {
        REQUIRE(f.trace.cross[l].size() == 4);
        for (std::size_t h = 0; h < 4; ++h) {
            const Matrix& c = f.trace.cross[l][h];
            const Matrix& s = f.trace.self[l][h];
            CHECK(c.rows() == 6);
            CHECK(c.cols() == 9);
            CHECK(s.cols() == 6);
            for (std::size_t r = 0; r < 6; ++r) {
                CHECK(std::abs(std::accumulate(c.row(r).begin(), c.row(r).end(), 0.0) - 1) < 1e-9);
                CHECK(std::abs(std::accumulate(s.row(r).begin(), s.row(r).end(), 0.0) - 1) < 1e-9);
            }
        }
    }
}

TEST_CASE("vt_forward rejects mismatched inputs") {
    const VTParams p = init_params(8, 6, 2, 1, 1);
    CHECK_THROWS_AS(vt_forward(Matrix(3, 7), Matrix(4, 6), p), DimensionError);
    CHECK_THROWS_AS(vt_forward(Matrix(3, 8), Matrix(4, 5), p), DimensionError);
}

TEST_CASE("gradient check, one layer") { check_gradients(1); }

TEST_CASE("gradient check, two stacked layers") { check_gradients(2); }

TEST_CASE("zero upstream gradient gives zero gradients") {
    Rng rng(3);
    const VTParams p = random_params(8, 6, 2, 2, 5);
    ForwardCache cache;
    vt_forward(random_matrix(rng, 3, 8), random_matrix(rng, 4, 6), p, &cache);
    const VTBackward back = vt_backward(Matrix(3, 8), cache, p);
    CHECK(back.grads == zeros_like(p));
    CHECK(back.d_text == Matrix(3, 8));
}

TEST_CASE("vt_backward rejects a foreign cache") {
    Rng rng(3);
    const VTParams p = random_params(8, 6, 2, 1, 5);
    ForwardCache cache;
    vt_forward(random_matrix(rng, 3, 8), random_matrix(rng, 4, 6), p, &cache);
    CHECK_THROWS_AS(vt_backward(Matrix(3, 8), cache, init_params(8, 6, 2, 2, 5)), DimensionError);
    CHECK_THROWS_AS(vt_backward(Matrix(3, 8), cache, init_params(8, 6, 4, 1, 5)), DimensionError);
    CHECK_THROWS_AS(vt_backward(Matrix(2, 8), cache, p), DimensionError);
}

TEST_CASE("attention_map") {
    const VTParams p = random_params(8, 6, 2, 2, 11);
    Rng rng(12);
    SUBCASE("identical tokens give a uniform map") {
        Matrix spatial(6, 6);
        const Matrix one = random_matrix(rng, 1, 6);
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 6; ++c) spatial(r, c) = one(0, c);
        const auto f = vt_forward(random_matrix(rng, 4, 8), spatial, p);
        const Matrix m = attention_map(f.trace, 2, 1, 2, 3);
        CHECK(m.rows() == 2);
        CHECK(m.cols() == 3);
        for (double v : m.values()) CHECK(std::abs(v - 1.0 / 6.0) < 1e-12);
    }
    SUBCASE("cells sum to one, bad indices throw") {
        const auto f = vt_forward(random_matrix(rng, 4, 8), random_matrix(rng, 6, 6), p);
        for (std::size_t c = 0; c < 4; ++c) {
            const Matrix m = attention_map(f.trace, c, 0, 3, 2);
            const double sum = std::accumulate(m.values().begin(), m.values().end(), 0.0);
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
        // Head average equals the mean of the per-head rows.
        const Matrix m = attention_map(f.trace, 1, 1, 2, 3);
        const double want = 0.5 * (f.trace.cross[1][0](1, 4) + f.trace.cross[1][1](1, 4));
        CHECK(std::abs(m(1, 1) - want) < 1e-15);

        CHECK_THROWS_AS(attention_map(f.trace, 4, 0, 2, 3), std::out_of_range);
        CHECK_THROWS_AS(attention_map(f.trace, 0, 2, 2, 3), std::out_of_range);
        CHECK_THROWS(attention_map(f.trace, 0, 0, 2, 2));
    }
}

TEST_CASE("checkpoint roundtrip") {
    TempDir dir;
    const VTParams p = random_params(8, 6, 2, 2, 21);
    write_checkpoint(p, dir / "m.vtpm");
    const VTParams q = read_checkpoint(dir / "m.vtpm");
    write_checkpoint(q, dir / "m2.vtpm");
    const auto first = encode_checkpoint(p);
    CHECK(encode_checkpoint(q) == first);
    CHECK(first.size() == kCheckpointHeaderSize + 4 * p.parameter_count());
    CHECK(std::string(first.begin(), first.begin() + 4) == "VTPM");
    CHECK(q.heads == 2);
    CHECK(q.num_layers() == 2);
    // Stored at f32: values agree to single precision.
    const auto a = flatten(p);
    const auto b = flatten(q);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == static_cast<double>(static_cast<float>(a[i])));

    auto bad = first;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = first;
    bad.pop_back();
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    bad = first;
    bad[4] = 2;
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
}
