// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtclip/synth.hpp"

#include "vtclip/rng.hpp"

#include <cmath>

namespace vtclip {

namespace {

std::vector<double> unit_gaussian(Rng& rng, std::size_t n) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.gaussian() * scale;
    }
    return v;
}

void normalize(std::vector<double>& v) {
    double sq = 0.0;
    for (double x : v) {
        sq += x * x;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& x : v) {
        x *= inv;
    }
}

}  // namespace

void validate(const SynthConfig& cfg) {
    if (cfg.num_classes < 2) {
        throw ConfigError("synth: need at least 2 classes");
    }
    if (cfg.global_dim == 0 || cfg.spatial_dim == 0 || cfg.num_tokens() == 0) {
        throw ConfigError("synth: dimensions must be positive");
    }
    if (cfg.informative_tokens == 0 || cfg.informative_tokens > cfg.num_tokens()) {
        throw ConfigError("synth: informative tokens m=" + std::to_string(cfg.informative_tokens) +
                          " must be in [1, S=" + std::to_string(cfg.num_tokens()) + "]");
    }
    if (!(cfg.noise_sigma > 0.0) || !std::isfinite(cfg.noise_sigma)) {
        throw ConfigError("synth: noise_sigma must be positive");
    }
}

SynthData synth_bank(const SynthConfig& cfg) {
    validate(cfg);
    const std::size_t k_count = cfg.num_classes;
    const std::size_t d = cfg.global_dim;
    const std::size_t ds = cfg.spatial_dim;
    const std::size_t s = cfg.num_tokens();
    const std::size_t m = cfg.informative_tokens;
    Rng rng(cfg.seed);

    SynthData out;
    out.texts.dim = cfg.global_dim;
    out.texts.prompt_template = cfg.prompt_template;
    for (std::size_t k = 0; k < k_count; ++k) {
        out.texts.class_names.push_back("class_" + std::to_string(k));
        auto t = unit_gaussian(rng, d);
        normalize(t);
        for (double x : t) {
            out.texts.rows.push_back(static_cast<float>(x));
        }
    }

    std::vector<std::vector<double>> prototypes(k_count);
    for (auto& p : prototypes) {
        p = unit_gaussian(rng, ds);
        normalize(p);
    }

    Matrix projection(d, ds);
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(ds));
    for (auto& x : projection.values()) {
        x = rng.gaussian() * proj_scale;
    }

    auto make_split = [&](SplitTag tag, std::uint32_t per_class) {
        FeatureBank bank;
        bank.num_classes = cfg.num_classes;
        bank.global_dim = cfg.global_dim;
        bank.spatial_dim = cfg.spatial_dim;
        bank.num_tokens = static_cast<std::uint32_t>(s);
        bank.grid_h = cfg.grid_h;
        bank.grid_w = cfg.grid_w;
        bank.split = tag;
        bank.images.reserve(k_count * per_class);
        for (std::size_t k = 0; k < k_count; ++k) {
            for (std::uint32_t j = 0; j < per_class; ++j) {
                ImageRecord im;
                im.label = static_cast<std::uint32_t>(k);
                im.spatial.resize(s * ds);
                std::vector<double> pooled(ds, 0.0);
                for (std::size_t tok = 0; tok < m; ++tok) {
                    auto noise = unit_gaussian(rng, ds);
                    for (std::size_t c = 0; c < ds; ++c) {
                        const double v = prototypes[k][c] + cfg.noise_sigma * noise[c];
                        pooled[c] += v / static_cast<double>(m);
                        im.spatial[tok * ds + c] = static_cast<float>(v);
                    }
                }
                for (std::size_t tok = m; tok < s; ++tok) {
                    auto bg = unit_gaussian(rng, ds);
                    for (std::size_t c = 0; c < ds; ++c) {
                        im.spatial[tok * ds + c] = static_cast<float>(bg[c]);
                    }
                }
                auto noise = unit_gaussian(rng, d);
                std::vector<double> global(d);
                for (std::size_t r = 0; r < d; ++r) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < ds; ++c) {
                        acc += projection(r, c) * pooled[c];
                    }
                    global[r] = acc + cfg.noise_sigma * noise[r];
                }
                normalize(global);
                im.global.assign(global.begin(), global.end());
                bank.images.push_back(std::move(im));
            }
        }
        return bank;
    };

    out.train = make_split(SplitTag::Train, cfg.train_per_class);
    out.test = make_split(SplitTag::Test, cfg.test_per_class);
    return out;
}

}  // namespace vtclip
