// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vtclip/feature_bank.hpp"

#include <cstdint>
#include <string>

namespace vtclip {

enum class SynthMode { AlignedThroughSpatial };

struct SynthConfig {
    std::uint32_t num_classes = 10;
    std::uint32_t global_dim = 32;
    std::uint32_t spatial_dim = 48;
    std::uint32_t grid_h = 4;
    std::uint32_t grid_w = 4;
    std::uint32_t train_per_class = 32;
    std::uint32_t test_per_class = 100;
    std::uint32_t informative_tokens = 4;
    double noise_sigma = 0.1;
    SynthMode mode = SynthMode::AlignedThroughSpatial;
    std::uint64_t seed = 7;
    std::string prompt_template = "a photo of a {}.";

    std::uint32_t num_tokens() const { return grid_h * grid_w; }
};

void validate(const SynthConfig& cfg);

struct SynthData {
    FeatureBank train;
    FeatureBank test;
    ClassEmbeddings texts;
};

/// Synthesizes a dataset whose class identity lives only in the spatial
/// tokens; the class texts are unrelated to the global features.
///
/// All randomness comes from one Rng(cfg.seed), drawn in this order. Every
/// "g_n" is an n-vector of independent gaussian() draws scaled by 1/sqrt(n),
/// i.e. an isotropic Gaussian with unit expected squared norm:
///   1. text rows t_k = normalize(g_D), k = 0..K-1
///   2. prototypes p_k = normalize(g_Ds), k = 0..K-1
///   3. projection P (D x Ds), row-major, entries gaussian() / sqrt(Ds)
///   4. train images, class-major, then test images likewise; per image:
///        tokens 0..m-1  = p_k + sigma * g_Ds   (token by token)
///        tokens m..S-1  = g_Ds                 (background)
///        global         = normalize(P * mean(tokens 0..m-1) + sigma * g_D)
/// Values are rounded to float as they are stored.
SynthData synth_bank(const SynthConfig& cfg);

}  // namespace vtclip
