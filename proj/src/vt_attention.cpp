// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtclip/vt_attention.hpp"

#include "byte_io.hpp"
#include "vtclip/rng.hpp"

#include <bit>
#include <cmath>

namespace vtclip {

namespace {

Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (auto& v : w.values()) {
        v = (2.0 * rng.uniform() - 1.0) * limit;
    }
    return w;
}

AttentionWeights init_attention(std::size_t dim, std::size_t kv_dim, Rng& rng) {
    AttentionWeights a;
    a.w_q = xavier_uniform(dim, dim, rng);
    a.w_k = xavier_uniform(kv_dim, dim, rng);
    a.w_v = xavier_uniform(kv_dim, dim, rng);
    a.w_o = Matrix(dim, dim);
    a.b_q.assign(dim, 0.0);
    a.b_k.assign(dim, 0.0);
    a.b_v.assign(dim, 0.0);
    a.b_o.assign(dim, 0.0);
    return a;
}

LayerNormWeights init_layer_norm(std::size_t dim) {
    return {Vector(dim, 1.0), Vector(dim, 0.0)};
}

}  // namespace

std::size_t VTParams::parameter_count() const {
    std::size_t n = 0;
    for_each_tensor(*this, [&](const std::string&, std::span<const double> t) { n += t.size(); });
    return n;
}

VTParams init_params(std::size_t dim, std::size_t spatial_dim, std::size_t heads,
                     std::size_t layers, std::uint64_t seed) {
    if (heads == 0 || layers == 0) {
        throw ConfigError("init_params: heads and layers must be >= 1 (got H=" +
                          std::to_string(heads) + ", L=" + std::to_string(layers) + ")");
    }
    if (dim == 0 || spatial_dim == 0) {
        throw ConfigError("init_params: dimensions must be positive");
    }
    if (dim % heads != 0) {
        throw ConfigError("init_params: D=" + std::to_string(dim) +
                          " is not divisible by H=" + std::to_string(heads));
    }
    Rng rng(seed);
    VTParams p;
    p.dim = dim;
    p.spatial_dim = spatial_dim;
    p.heads = heads;
    p.layers.reserve(layers);
    const std::size_t hidden = kFeedForwardMultiplier * dim;
    for (std::size_t l = 0; l < layers; ++l) {
        DecoderLayer layer;
        layer.self_attn = init_attention(dim, dim, rng);
        layer.cross_attn = init_attention(dim, spatial_dim, rng);
        layer.ffn.w_1 = xavier_uniform(dim, hidden, rng);
        layer.ffn.b_1.assign(hidden, 0.0);
        layer.ffn.w_2 = Matrix(hidden, dim);
        layer.ffn.b_2.assign(dim, 0.0);
        layer.ln_self = init_layer_norm(dim);
        layer.ln_cross = init_layer_norm(dim);
        layer.ln_ffn = init_layer_norm(dim);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

VTParams zeros_like(const VTParams& like) {
    VTParams z = like;
    for_each_tensor(z, [](const std::string&, std::span<double> t) {
        std::fill(t.begin(), t.end(), 0.0);
    });
    return z;
}

std::vector<double> flatten(const VTParams& params) {
    std::vector<double> out;
    out.reserve(params.parameter_count());
    for_each_tensor(params, [&](const std::string&, std::span<const double> t) {
        out.insert(out.end(), t.begin(), t.end());
    });
    return out;
}

void unflatten(std::span<const double> values, VTParams& params) {
    if (values.size() != params.parameter_count()) {
        throw DimensionError("unflatten: " + std::to_string(values.size()) + " values for " +
                             std::to_string(params.parameter_count()) + " parameters");
    }
    std::size_t pos = 0;
    for_each_tensor(params, [&](const std::string&, std::span<double> t) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), t.size(), t.begin());
        pos += t.size();
    });
}

std::uint64_t param_checksum(const VTParams& params) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(params.parameter_count() * 8);
    for_each_tensor(params, [&](const std::string&, std::span<const double> t) {
        for (double v : t) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int i = 0; i < 8; ++i) {
                bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
            }
        }
    });
    return detail::fnv1a(bytes);
}

AttentionOutput multi_head_attention(const Matrix& query_in, const Matrix& key_in,
                                     const Matrix& value_in, const AttentionWeights& w,
                                     std::size_t heads, AttentionCache* cache) {
    const std::size_t dim = w.w_q.cols();
    if (heads == 0 || dim % heads != 0) {
        throw DimensionError("multi_head_attention: width " + std::to_string(dim) +
                             " not divisible into " + std::to_string(heads) + " heads");
    }
    if (key_in.rows() != value_in.rows()) {
        throw DimensionError("multi_head_attention: keys " + key_in.shape_string() +
                             " and values " + value_in.shape_string() + " differ in length");
    }
    if (w.w_o.rows() != dim || w.w_o.cols() != dim || w.w_k.cols() != dim ||
        w.w_v.cols() != dim) {
        throw DimensionError("multi_head_attention: inconsistent projection widths");
    }
    Matrix q = affine(query_in, w.w_q, w.b_q);
    Matrix k = affine(key_in, w.w_k, w.b_k);
    Matrix v = affine(value_in, w.w_v, w.b_v);

    const std::size_t dh = dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix context(query_in.rows(), dim);
    std::vector<Matrix> probs;
    probs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix qh = slice(q, 0, q.rows(), h * dh, dh);
        const Matrix kh = slice(k, 0, k.rows(), h * dh, dh);
        const Matrix vh = slice(v, 0, v.rows(), h * dh, dh);
        Matrix p = softmax_rows(matmul_nt(qh, kh) * scale);
        paste_columns(context, matmul(p, vh), h * dh);
        probs.push_back(std::move(p));
    }
    AttentionOutput result{affine(context, w.w_o, w.b_o), probs};
    if (cache != nullptr) {
        cache->query_in = query_in;
        cache->key_in = key_in;
        cache->value_in = value_in;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->probs = std::move(probs);
        cache->context = std::move(context);
    }
    return result;
}

AttentionGrads multi_head_attention_backward(const AttentionCache& cache,
                                             const AttentionWeights& w, std::size_t heads,
                                             const Matrix& d_out) {
    const std::size_t dim = w.w_q.cols();
    if (cache.probs.size() != heads || d_out.rows() != cache.q.rows() || d_out.cols() != dim) {
        throw DimensionError("multi_head_attention_backward: cache does not match d_out " +
                             d_out.shape_string());
    }
    const std::size_t dh = dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    AttentionGrads g;
    auto out_grads = affine_backward(cache.context, w.w_o, d_out);
    g.d_weights.w_o = std::move(out_grads.dw);
    g.d_weights.b_o = std::move(out_grads.db);
    const Matrix& d_context = out_grads.dx;

    Matrix dq(cache.q.rows(), dim);
    Matrix dk(cache.k.rows(), dim);
    Matrix dv(cache.v.rows(), dim);
    for (std::size_t h = 0; h < heads; ++h) {
        const Matrix& p = cache.probs[h];
        const Matrix qh = slice(cache.q, 0, cache.q.rows(), h * dh, dh);
        const Matrix kh = slice(cache.k, 0, cache.k.rows(), h * dh, dh);
        const Matrix vh = slice(cache.v, 0, cache.v.rows(), h * dh, dh);
        const Matrix dch = slice(d_context, 0, d_context.rows(), h * dh, dh);
        const Matrix dp = matmul_nt(dch, vh);
        paste_columns(dv, matmul_tn(p, dch), h * dh);
        const Matrix ds = softmax_rows_backward(p, dp) * scale;
        paste_columns(dq, matmul(ds, kh), h * dh);
        paste_columns(dk, matmul_tn(ds, qh), h * dh);
    }

    auto q_grads = affine_backward(cache.query_in, w.w_q, dq);
    auto k_grads = affine_backward(cache.key_in, w.w_k, dk);
    auto v_grads = affine_backward(cache.value_in, w.w_v, dv);
    g.d_query_in = std::move(q_grads.dx);
    g.d_key_in = std::move(k_grads.dx);
    g.d_value_in = std::move(v_grads.dx);
    g.d_weights.w_q = std::move(q_grads.dw);
    g.d_weights.b_q = std::move(q_grads.db);
    g.d_weights.w_k = std::move(k_grads.dw);
    g.d_weights.b_k = std::move(k_grads.db);
    g.d_weights.w_v = std::move(v_grads.dw);
    g.d_weights.b_v = std::move(v_grads.db);
    return g;
}

VTForward vt_forward(const Matrix& text, const Matrix& spatial, const VTParams& params,
                     ForwardCache* cache) {
    if (text.cols() != params.dim || spatial.cols() != params.spatial_dim) {
        throw DimensionError("vt_forward: text " + text.shape_string() + " and spatial " +
                             spatial.shape_string() + " do not match params (D=" +
                             std::to_string(params.dim) + ", D_s=" +
                             std::to_string(params.spatial_dim) + ")");
    }
    if (text.rows() == 0 || spatial.rows() == 0) {
        throw DimensionError("vt_forward: empty text or spatial input");
    }
    if (cache != nullptr) {
        cache->dim = params.dim;
        cache->spatial_dim = params.spatial_dim;
        cache->heads = params.heads;
        cache->num_classes = text.rows();
        cache->num_tokens = spatial.rows();
        cache->layers.assign(params.num_layers(), LayerCache{});
    }

    VTForward result;
    Matrix x = text;
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const DecoderLayer& layer = params.layers[l];
        LayerCache* lc = cache != nullptr ? &cache->layers[l] : nullptr;

        const Matrix a = layer_norm(x, layer.ln_self.gamma, layer.ln_self.beta, kLayerNormEps,
                                    lc ? &lc->ln_self : nullptr);
        auto self_out = multi_head_attention(a, a, a, layer.self_attn, params.heads,
                                             lc ? &lc->self_attn : nullptr);
        x += self_out.out;

        const Matrix b = layer_norm(x, layer.ln_cross.gamma, layer.ln_cross.beta, kLayerNormEps,
                                    lc ? &lc->ln_cross : nullptr);
        auto cross_out = multi_head_attention(b, spatial, spatial, layer.cross_attn, params.heads,
                                              lc ? &lc->cross_attn : nullptr);
        x += cross_out.out;

        Matrix c = layer_norm(x, layer.ln_ffn.gamma, layer.ln_ffn.beta, kLayerNormEps,
                              lc ? &lc->ln_ffn : nullptr);
        Matrix hidden_pre = affine(c, layer.ffn.w_1, layer.ffn.b_1);
        Matrix hidden = relu(hidden_pre);
        x += affine(hidden, layer.ffn.w_2, layer.ffn.b_2);
        if (lc != nullptr) {
            lc->ffn_in = std::move(c);
            lc->ffn_hidden_pre = std::move(hidden_pre);
            lc->ffn_hidden = std::move(hidden);
        }

        result.trace.self.push_back(std::move(self_out.weights));
        result.trace.cross.push_back(std::move(cross_out.weights));
    }
    result.output = std::move(x);
    return result;
}

VTBackward vt_backward(const Matrix& d_output, const ForwardCache& cache, const VTParams& params) {
    if (cache.dim != params.dim || cache.spatial_dim != params.spatial_dim ||
        cache.heads != params.heads || cache.layers.size() != params.num_layers()) {
        throw DimensionError("vt_backward: forward cache was built for different params");
    }
    if (d_output.rows() != cache.num_classes || d_output.cols() != params.dim) {
        throw DimensionError("vt_backward: upstream gradient " + d_output.shape_string() +
                             " does not match output [" + std::to_string(cache.num_classes) +
                             "x" + std::to_string(params.dim) + "]");
    }
    VTBackward result{zeros_like(params), d_output};
    Matrix& dx = result.d_text;
    for (std::size_t l = params.num_layers(); l-- > 0;) {
        const DecoderLayer& layer = params.layers[l];
        const LayerCache& lc = cache.layers[l];
        DecoderLayer& g = result.grads.layers[l];

        // Feed-forward sublayer.
        auto w2 = affine_backward(lc.ffn_hidden, layer.ffn.w_2, dx);
        g.ffn.w_2 = std::move(w2.dw);
        g.ffn.b_2 = std::move(w2.db);
        const Matrix d_hidden_pre = relu_backward(lc.ffn_hidden_pre, w2.dx);
        auto w1 = affine_backward(lc.ffn_in, layer.ffn.w_1, d_hidden_pre);
        g.ffn.w_1 = std::move(w1.dw);
        g.ffn.b_1 = std::move(w1.db);
        auto ln3 = layer_norm_backward(lc.ln_ffn, layer.ln_ffn.gamma, w1.dx);
        g.ln_ffn = {std::move(ln3.dgamma), std::move(ln3.dbeta)};
        dx += ln3.dx;

        // Cross-attention sublayer; spatial tokens are frozen inputs.
        auto cross = multi_head_attention_backward(lc.cross_attn, layer.cross_attn, params.heads, dx);
        g.cross_attn = std::move(cross.d_weights);
        auto ln2 = layer_norm_backward(lc.ln_cross, layer.ln_cross.gamma, cross.d_query_in);
        g.ln_cross = {std::move(ln2.dgamma), std::move(ln2.dbeta)};
        dx += ln2.dx;

        // Self-attention sublayer; query, key and value share one input.
        auto self = multi_head_attention_backward(lc.self_attn, layer.self_attn, params.heads, dx);
        g.self_attn = std::move(self.d_weights);
        Matrix d_a = self.d_query_in;
        d_a += self.d_key_in;
        d_a += self.d_value_in;
        auto ln1 = layer_norm_backward(lc.ln_self, layer.ln_self.gamma, d_a);
        g.ln_self = {std::move(ln1.dgamma), std::move(ln1.dbeta)};
        dx += ln1.dx;
    }
    return result;
}

Matrix attention_map(const AttentionTrace& trace, std::size_t class_idx, std::size_t layer_idx,
                     std::size_t grid_h, std::size_t grid_w) {
    if (layer_idx >= trace.cross.size()) {
        throw std::out_of_range("attention_map: layer " + std::to_string(layer_idx) +
                                " out of range (have " + std::to_string(trace.cross.size()) +
                                ")");
    }
    const auto& heads = trace.cross[layer_idx];
    if (heads.empty() || class_idx >= heads.front().rows()) {
        throw std::out_of_range("attention_map: class " + std::to_string(class_idx) +
                                " out of range");
    }
    const std::size_t s = heads.front().cols();
    if (grid_h * grid_w != s) {
        throw DimensionError("attention_map: grid " + std::to_string(grid_h) + "x" +
                             std::to_string(grid_w) + " does not cover " + std::to_string(s) +
                             " tokens");
    }
    Matrix map(grid_h, grid_w);
    const double inv_h = 1.0 / static_cast<double>(heads.size());
    for (const auto& p : heads) {
        auto row = p.row(class_idx);
        for (std::size_t t = 0; t < s; ++t) {
            map.values()[t] += row[t] * inv_h;
        }
    }
    return map;
}

}  // namespace vtclip
