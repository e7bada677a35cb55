// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

// Visual-guided text head: stacked pre-norm decoder blocks in which the K
// class-text rows self-attend, then cross-attend to one image's spatial
// tokens, then pass through a ReLU feed-forward network.

#pragma once

#include "vtclip/matrix.hpp"
#include "vtclip/ops.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vtclip {

/// Projections of one multi-head attention sublayer. Queries come from a
/// width-D input, keys and values from a width-D_kv input; everything is
/// projected to width D and split into heads of width D / H.
struct AttentionWeights {
    Matrix w_q;  // D x D
    Vector b_q;
    Matrix w_k;  // D_kv x D
    Vector b_k;
    Matrix w_v;  // D_kv x D
    Vector b_v;
    Matrix w_o;  // D x D
    Vector b_o;

    bool operator==(const AttentionWeights&) const = default;
};

struct FeedForwardWeights {
    Matrix w_1;  // D x 4D
    Vector b_1;
    Matrix w_2;  // 4D x D
    Vector b_2;

    bool operator==(const FeedForwardWeights&) const = default;
};

struct LayerNormWeights {
    Vector gamma;
    Vector beta;

    bool operator==(const LayerNormWeights&) const = default;
};

struct DecoderLayer {
    AttentionWeights self_attn;
    AttentionWeights cross_attn;
    FeedForwardWeights ffn;
    LayerNormWeights ln_self;
    LayerNormWeights ln_cross;
    LayerNormWeights ln_ffn;

    bool operator==(const DecoderLayer&) const = default;
};

/// All trainable state of the head. Also used as the gradient container.
struct VTParams {
    std::size_t dim = 0;
    std::size_t spatial_dim = 0;
    std::size_t heads = 0;
    std::vector<DecoderLayer> layers;

    std::size_t num_layers() const { return layers.size(); }
    std::size_t head_dim() const { return dim / heads; }
    std::size_t parameter_count() const;

    bool operator==(const VTParams&) const = default;
};

inline constexpr std::size_t kFeedForwardMultiplier = 4;

/// Xavier-uniform W_Q, W_K, W_V, W_1; zero output projections (W_O, W_2)
/// and biases; gamma = 1, beta = 0. With zero output projections every
/// sublayer contributes exactly zero, so the head starts as the identity.
/// Throws ConfigError unless H >= 1, L >= 1 and H divides D.
VTParams init_params(std::size_t dim, std::size_t spatial_dim, std::size_t heads,
                     std::size_t layers, std::uint64_t seed);

/// Same shapes as `like`, every entry zero.
VTParams zeros_like(const VTParams& like);

/// Visits every parameter array in checkpoint order: per layer, self_attn
/// (w_q b_q w_k b_k w_v b_v w_o b_o), cross_attn (same), ffn (w_1 b_1 w_2 b_2),
/// then ln_self, ln_cross, ln_ffn (gamma beta each).
template <typename Params, typename Fn>
void for_each_tensor(Params& params, Fn&& fn) {
    auto visit_attention = [&](auto& a, const std::string& prefix) {
        fn(prefix + ".w_q", a.w_q.values());
        fn(prefix + ".b_q", std::span(a.b_q));
        fn(prefix + ".w_k", a.w_k.values());
        fn(prefix + ".b_k", std::span(a.b_k));
        fn(prefix + ".w_v", a.w_v.values());
        fn(prefix + ".b_v", std::span(a.b_v));
        fn(prefix + ".w_o", a.w_o.values());
        fn(prefix + ".b_o", std::span(a.b_o));
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        const std::string p = "layer" + std::to_string(l);
        visit_attention(layer.self_attn, p + ".self_attn");
        visit_attention(layer.cross_attn, p + ".cross_attn");
        fn(p + ".ffn.w_1", layer.ffn.w_1.values());
        fn(p + ".ffn.b_1", std::span(layer.ffn.b_1));
        fn(p + ".ffn.w_2", layer.ffn.w_2.values());
        fn(p + ".ffn.b_2", std::span(layer.ffn.b_2));
        fn(p + ".ln_self.gamma", std::span(layer.ln_self.gamma));
        fn(p + ".ln_self.beta", std::span(layer.ln_self.beta));
        fn(p + ".ln_cross.gamma", std::span(layer.ln_cross.gamma));
        fn(p + ".ln_cross.beta", std::span(layer.ln_cross.beta));
        fn(p + ".ln_ffn.gamma", std::span(layer.ln_ffn.gamma));
        fn(p + ".ln_ffn.beta", std::span(layer.ln_ffn.beta));
    }
}

std::vector<double> flatten(const VTParams& params);
/// Overwrites every parameter of `params` from `values` (checkpoint order).
void unflatten(std::span<const double> values, VTParams& params);

/// FNV-1a over the IEEE-754 bytes of every parameter, checkpoint order.
std::uint64_t param_checksum(const VTParams& params);

struct AttentionCache {
    Matrix query_in;
    Matrix key_in;
    Matrix value_in;
    Matrix q;
    Matrix k;
    Matrix v;
    std::vector<Matrix> probs;  // per head, n_q x n_k
    Matrix context;             // heads concatenated, n_q x D
};

struct AttentionOutput {
    Matrix out;                   // n_q x D
    std::vector<Matrix> weights;  // per head, n_q x n_k
};

/// softmax(Q K^T / sqrt(d_h)) V per head, heads concatenated, then W_O.
AttentionOutput multi_head_attention(const Matrix& query_in, const Matrix& key_in,
                                     const Matrix& value_in, const AttentionWeights& w,
                                     std::size_t heads, AttentionCache* cache = nullptr);

struct AttentionGrads {
    Matrix d_query_in;
    Matrix d_key_in;
    Matrix d_value_in;
    AttentionWeights d_weights;
};

AttentionGrads multi_head_attention_backward(const AttentionCache& cache,
                                             const AttentionWeights& w, std::size_t heads,
                                             const Matrix& d_out);

/// Attention weights recorded during a forward pass, indexed [layer][head].
struct AttentionTrace {
    std::vector<std::vector<Matrix>> cross;  // K x S each
    std::vector<std::vector<Matrix>> self;   // K x K each
};

struct LayerCache {
    LayerNormCache ln_self;
    AttentionCache self_attn;
    LayerNormCache ln_cross;
    AttentionCache cross_attn;
    LayerNormCache ln_ffn;
    Matrix ffn_in;
    Matrix ffn_hidden_pre;
    Matrix ffn_hidden;
};

struct ForwardCache {
    std::size_t dim = 0;
    std::size_t spatial_dim = 0;
    std::size_t heads = 0;
    std::size_t num_classes = 0;
    std::size_t num_tokens = 0;
    std::vector<LayerCache> layers;
};

struct VTForward {
    Matrix output;  // VT_c, K x D
    AttentionTrace trace;
};

/// Runs every layer on X = text (K x D) with keys/values from spatial
/// (S x D_s):
///   X <- X + SelfAttn(LN_self(X))
///   X <- X + CrossAttn(LN_cross(X), spatial, spatial)
///   X <- X + W_2 relu(W_1 LN_ffn(X) + b_1) + b_2
/// Fills `cache` for vt_backward when given.
VTForward vt_forward(const Matrix& text, const Matrix& spatial, const VTParams& params,
                     ForwardCache* cache = nullptr);

struct VTBackward {
    VTParams grads;
    Matrix d_text;
};

/// Gradients of every parameter and of the text input, given dL/dVT_c.
/// Throws DimensionError if the cache was not produced with these params.
VTBackward vt_backward(const Matrix& d_output, const ForwardCache& cache, const VTParams& params);

/// Head-averaged cross-attention row of `class_idx` at `layer_idx`,
/// reshaped row-major to grid_h x grid_w.
Matrix attention_map(const AttentionTrace& trace, std::size_t class_idx, std::size_t layer_idx,
                     std::size_t grid_h, std::size_t grid_w);

}  // namespace vtclip
