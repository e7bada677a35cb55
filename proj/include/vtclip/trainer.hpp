// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vtclip/feature_bank.hpp"
#include "vtclip/matching.hpp"
#include "vtclip/vt_attention.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtclip {

enum class Schedule { Cosine, Constant };

const char* to_string(Schedule s);

struct TrainConfig {
    std::size_t shots = 16;
    std::size_t batch_size = 32;
    double lr = 2e-3;
    double momentum = 0.9;
    std::size_t epochs = 200;
    Schedule schedule = Schedule::Cosine;
    std::uint64_t seed = 7;
    std::size_t heads = 8;
    std::size_t layers = 1;
    double logit_scale = kDefaultLogitScale;
    /// Worker threads for per-image passes; 0 picks hardware concurrency.
    /// Results do not depend on this value.
    std::size_t threads = 1;

    /// Throws ConfigError on a non-positive or non-finite hyperparameter.
    void validate() const;
};

/// Learning rate for `epoch` (0-based). Cosine anneals from lr towards zero.
double scheduled_lr(const TrainConfig& cfg, std::size_t epoch);

struct TrainReport {
    TrainConfig config;
    std::vector<double> epoch_loss;
    double train_accuracy = 0.0;
    std::optional<double> test_accuracy;
    double wall_time_seconds = 0.0;
    std::uint64_t param_checksum = 0;

    /// `key=value` lines. Wall time is omitted when include_timing is false.
    std::string to_text(bool include_timing = true) const;
};

struct TrainResult {
    VTParams params;
    TrainReport report;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, double loss);
    std::size_t epoch() const { return epoch_; }

private:
    std::size_t epoch_;
};

struct BatchGradient {
    double loss = 0.0;
    VTParams grads;
};

/// Cross-entropy over vt_logits for the images at `indices`, and its
/// gradient with respect to every parameter. Per-image passes may run on
/// `threads` workers; gradients are reduced in index order. If the head
/// produces a non-finite output the loss is NaN and the gradients are zero.
BatchGradient batch_gradient(const FeatureBank& bank, std::span<const std::size_t> indices,
                             const Matrix& text, const VTParams& params, double logit_scale,
                             std::size_t threads = 1);

/// Momentum SGD on VTParams only. Shot sampling, initialization and epoch
/// shuffling all derive from cfg.seed. Throws TrainingDiverged on a
/// non-finite loss.
TrainResult train(const FeatureBank& train_bank, const ClassEmbeddings& texts,
                  const TrainConfig& cfg, const FeatureBank* test_bank = nullptr);

/// Predicted labels for every image of `bank` under the adapted head.
std::vector<std::uint32_t> predict_bank(const FeatureBank& bank, const ClassEmbeddings& texts,
                                        const VTParams& params,
                                        double logit_scale = kDefaultLogitScale,
                                        std::size_t threads = 1);

double evaluate(const FeatureBank& bank, const ClassEmbeddings& texts, const VTParams& params,
                double logit_scale = kDefaultLogitScale, std::size_t threads = 1);

/// Accuracy of plain cosine matching between global features and texts.
double zero_shot_accuracy(const FeatureBank& bank, const ClassEmbeddings& texts,
                          double logit_scale = kDefaultLogitScale);

enum class AblationAxis { Heads, Layers };

const char* to_string(AblationAxis axis);
AblationAxis parse_ablation_axis(const std::string& name);

struct AblationCell {
    std::size_t value = 0;
    bool ok = false;
    double test_accuracy = 0.0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::string error;
};

/// One train + evaluate per value, all with base_cfg.seed. A failing cell
/// records its error and the sweep continues.
std::vector<AblationCell> ablate(const FeatureBank& train_bank, const FeatureBank& test_bank,
                                 const ClassEmbeddings& texts, AblationAxis axis,
                                 std::span<const std::size_t> values, const TrainConfig& base_cfg);

/// `axis_value,test_accuracy` with header; failed cells report `nan`.
std::string ablation_csv(std::span<const AblationCell> cells);

/// Resolves a requested worker count: 0 means hardware concurrency.
std::size_t resolve_threads(std::size_t requested);

}  // namespace vtclip
