// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtclip/trainer.hpp"

#include "vtclip/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

namespace vtclip {

namespace {

// Sub-stream identifiers for derive_seed.
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamShots = 2;
constexpr std::uint64_t kStreamShuffle = 3;

/// Runs fn(i) for i in [0, n) over contiguous chunks. Each index is handled
/// by exactly one worker, so callers writing to slot i need no locking.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    const std::size_t workers = std::min(resolve_threads(threads), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) {
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

void accumulate(VTParams& acc, const VTParams& g) {
    std::vector<std::span<const double>> src;
    for_each_tensor(g, [&](const std::string&, std::span<const double> t) { src.push_back(t); });
    std::size_t i = 0;
    for_each_tensor(acc, [&](const std::string&, std::span<double> t) {
        const auto s = src[i++];
        for (std::size_t j = 0; j < t.size(); ++j) {
            t[j] += s[j];
        }
    });
}

void check_compatible(const FeatureBank& bank, const ClassEmbeddings& texts,
                      const VTParams* params) {
    if (bank.global_dim != texts.dim) {
        throw DimensionError("bank global dim " + std::to_string(bank.global_dim) +
                             " does not match text dim " + std::to_string(texts.dim));
    }
    if (bank.num_classes != texts.num_classes()) {
        throw DimensionError("bank has " + std::to_string(bank.num_classes) + " classes but " +
                             std::to_string(texts.num_classes()) + " class embeddings");
    }
    if (params != nullptr &&
        (params->dim != bank.global_dim || params->spatial_dim != bank.spatial_dim)) {
        throw DimensionError("model (D=" + std::to_string(params->dim) +
                             ", D_s=" + std::to_string(params->spatial_dim) +
                             ") does not match bank (D=" + std::to_string(bank.global_dim) +
                             ", D_s=" + std::to_string(bank.spatial_dim) + ")");
    }
}

std::vector<std::uint32_t> labels_at(const FeatureBank& bank,
                                     std::span<const std::size_t> indices) {
    std::vector<std::uint32_t> out;
    out.reserve(indices.size());
    for (auto i : indices) {
        out.push_back(bank.images[i].label);
    }
    return out;
}

std::vector<std::uint32_t> predict_indices(const FeatureBank& bank,
                                           std::span<const std::size_t> indices,
                                           const Matrix& text, const VTParams& params,
                                           double logit_scale, std::size_t threads) {
    std::vector<Matrix> adapted(indices.size());
    parallel_for(indices.size(), threads, [&](std::size_t j) {
        adapted[j] = vt_forward(text, bank.spatial_tokens(indices[j]), params).output;
    });
    Matrix global(indices.size(), bank.global_dim);
    for (std::size_t j = 0; j < indices.size(); ++j) {
        const auto& g = bank.images[indices[j]].global;
        std::copy(g.begin(), g.end(), global.row(j).begin());
    }
    return predict(vt_logits(global, adapted, logit_scale));
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::size_t resolve_threads(std::size_t requested) {
    if (requested != 0) {
        return requested;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : hc;
}

const char* to_string(Schedule s) { return s == Schedule::Cosine ? "cosine" : "constant"; }

void TrainConfig::validate() const {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (shots == 0 || batch_size == 0 || epochs == 0) {
        throw ConfigError("train: shots, batch_size and epochs must be positive");
    }
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw ConfigError("train: lr must be finite and non-negative");
    }
    if (!(momentum >= 0.0) || !(momentum < 1.0)) {
        throw ConfigError("train: momentum must be in [0, 1)");
    }
    if (!positive(logit_scale)) {
        throw ConfigError("train: logit_scale must be positive");
    }
    if (heads == 0 || layers == 0) {
        throw ConfigError("train: heads and layers must be positive");
    }
}

double scheduled_lr(const TrainConfig& cfg, std::size_t epoch) {
    if (cfg.schedule == Schedule::Constant) {
        return cfg.lr;
    }
    const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

std::string TrainReport::to_text(bool include_timing) const {
    std::ostringstream out;
    out << "shots=" << config.shots << '\n'
        << "batch_size=" << config.batch_size << '\n'
        << "lr=" << format_double(config.lr) << '\n'
        << "momentum=" << format_double(config.momentum) << '\n'
        << "epochs=" << config.epochs << '\n'
        << "schedule=" << to_string(config.schedule) << '\n'
        << "seed=" << config.seed << '\n'
        << "heads=" << config.heads << '\n'
        << "layers=" << config.layers << '\n'
        << "logit_scale=" << format_double(config.logit_scale) << '\n';
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
        out << "epoch_loss." << e << '=' << format_double(epoch_loss[e]) << '\n';
    }
    out << "train_accuracy=" << format_double(train_accuracy) << '\n';
    if (test_accuracy) {
        out << "test_accuracy=" << format_double(*test_accuracy) << '\n';
    }
    if (include_timing) {
        out << "wall_time_s=" << format_double(wall_time_seconds) << '\n';
    }
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(param_checksum));
    out << "param_checksum=" << hex << '\n';
    return out.str();
}

TrainingDiverged::TrainingDiverged(std::size_t epoch, double loss)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                         format_double(loss) + ")"),
      epoch_(epoch) {}

BatchGradient batch_gradient(const FeatureBank& bank, std::span<const std::size_t> indices,
                             const Matrix& text, const VTParams& params, double logit_scale,
                             std::size_t threads) {
    const std::size_t b = indices.size();
    std::vector<ForwardCache> caches(b);
    std::vector<Matrix> adapted(b);
    parallel_for(b, threads, [&](std::size_t j) {
        adapted[j] = vt_forward(text, bank.spatial_tokens(indices[j]), params, &caches[j]).output;
    });
    for (const auto& a : adapted) {
        if (!all_finite(a.values())) {
            return {std::numeric_limits<double>::quiet_NaN(), zeros_like(params)};
        }
    }
    Matrix global(b, bank.global_dim);
    for (std::size_t j = 0; j < b; ++j) {
        const auto& g = bank.images[indices[j]].global;
        std::copy(g.begin(), g.end(), global.row(j).begin());
    }
    const auto labels = labels_at(bank, indices);
    const Logits logits = vt_logits(global, adapted, logit_scale);
    const CrossEntropy ce = cross_entropy(logits, labels);

    std::vector<VTParams> per_image(b);
    parallel_for(b, threads, [&](std::size_t j) {
        const Matrix d_adapted =
            vt_logits_backward(global.row(j), adapted[j], logit_scale, ce.d_scores.row(j));
        per_image[j] = vt_backward(d_adapted, caches[j], params).grads;
        caches[j] = ForwardCache{};
    });
    BatchGradient out{ce.loss, zeros_like(params)};
    for (const auto& g : per_image) {
        accumulate(out.grads, g);
    }
    return out;
}

TrainResult train(const FeatureBank& train_bank, const ClassEmbeddings& texts,
                  const TrainConfig& cfg, const FeatureBank* test_bank) {
    cfg.validate();
    check_compatible(train_bank, texts, nullptr);
    if (test_bank != nullptr) {
        check_compatible(*test_bank, texts, nullptr);
    }
    const auto start = std::chrono::steady_clock::now();

    const Matrix text = texts.matrix();
    const auto shots = sample_shots(train_bank, cfg.shots, derive_seed(cfg.seed, kStreamShots));
    VTParams params = init_params(train_bank.global_dim, train_bank.spatial_dim, cfg.heads,
                                  cfg.layers, derive_seed(cfg.seed, kStreamInit));
    VTParams velocity = zeros_like(params);
    Rng shuffle_rng(derive_seed(cfg.seed, kStreamShuffle));

    TrainReport report;
    report.config = cfg;
    std::vector<std::size_t> order = shots;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span(order));
        const double lr = scheduled_lr(cfg, epoch);
        double loss_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const std::span<const std::size_t> batch(order.data() + begin, end - begin);
            const BatchGradient bg =
                batch_gradient(train_bank, batch, text, params, cfg.logit_scale, cfg.threads);
            if (!std::isfinite(bg.loss)) {
                throw TrainingDiverged(epoch, bg.loss);
            }
            loss_sum += bg.loss * static_cast<double>(batch.size());

            std::vector<std::span<const double>> grads;
            for_each_tensor(bg.grads,
                            [&](const std::string&, std::span<const double> t) { grads.push_back(t); });
            std::vector<std::span<double>> vel;
            for_each_tensor(velocity, [&](const std::string&, std::span<double> t) { vel.push_back(t); });
            std::size_t ti = 0;
            for_each_tensor(params, [&](const std::string&, std::span<double> p) {
                auto v = vel[ti];
                auto g = grads[ti];
                ++ti;
                for (std::size_t j = 0; j < p.size(); ++j) {
                    v[j] = cfg.momentum * v[j] + g[j];
                    p[j] -= lr * v[j];
                }
            });
        }
        const double mean_loss = loss_sum / static_cast<double>(order.size());
        if (!std::isfinite(mean_loss)) {
            throw TrainingDiverged(epoch, mean_loss);
        }
        report.epoch_loss.push_back(mean_loss);
    }

    report.train_accuracy = accuracy(
        predict_indices(train_bank, shots, text, params, cfg.logit_scale, cfg.threads),
        labels_at(train_bank, shots));
    if (test_bank != nullptr) {
        report.test_accuracy = evaluate(*test_bank, texts, params, cfg.logit_scale, cfg.threads);
    }
    report.param_checksum = param_checksum(params);
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(params), std::move(report)};
}

std::vector<std::uint32_t> predict_bank(const FeatureBank& bank, const ClassEmbeddings& texts,
                                        const VTParams& params, double logit_scale,
                                        std::size_t threads) {
    check_compatible(bank, texts, &params);
    std::vector<std::size_t> all(bank.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return predict_indices(bank, all, texts.matrix(), params, logit_scale, threads);
}

double evaluate(const FeatureBank& bank, const ClassEmbeddings& texts, const VTParams& params,
                double logit_scale, std::size_t threads) {
    return accuracy(predict_bank(bank, texts, params, logit_scale, threads), bank.labels());
}

double zero_shot_accuracy(const FeatureBank& bank, const ClassEmbeddings& texts,
                          double logit_scale) {
    check_compatible(bank, texts, nullptr);
    const Logits logits = zero_shot_logits(bank.global_matrix(), texts.matrix(), logit_scale);
    return accuracy(predict(logits), bank.labels());
}

const char* to_string(AblationAxis axis) {
    return axis == AblationAxis::Heads ? "heads" : "layers";
}

AblationAxis parse_ablation_axis(const std::string& name) {
    if (name == "heads") {
        return AblationAxis::Heads;
    }
    if (name == "layers") {
        return AblationAxis::Layers;
    }
    throw ConfigError("unknown ablation axis '" + name + "' (expected heads or layers)");
}

std::vector<AblationCell> ablate(const FeatureBank& train_bank, const FeatureBank& test_bank,
                                 const ClassEmbeddings& texts, AblationAxis axis,
                                 std::span<const std::size_t> values, const TrainConfig& base_cfg) {
    std::vector<AblationCell> cells;
    cells.reserve(values.size());
    for (std::size_t value : values) {
        AblationCell cell;
        cell.value = value;
        TrainConfig cfg = base_cfg;
        (axis == AblationAxis::Heads ? cfg.heads : cfg.layers) = value;
        try {
            const auto result = train(train_bank, texts, cfg, &test_bank);
            cell.ok = true;
            cell.test_accuracy = result.report.test_accuracy.value_or(0.0);
            cell.initial_loss = result.report.epoch_loss.front();
            cell.final_loss = result.report.epoch_loss.back();
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
        cells.push_back(std::move(cell));
    }
    return cells;
}

std::string ablation_csv(std::span<const AblationCell> cells) {
    std::string out = "axis_value,test_accuracy\n";
    for (const auto& c : cells) {
        out += std::to_string(c.value) + "," + (c.ok ? format_double(c.test_accuracy) : "nan") +
               "\n";
    }
    return out;
}

}  // namespace vtclip
