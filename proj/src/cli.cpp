// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtclip/cli.hpp"

#include "vtclip/checkpoint.hpp"
#include "vtclip/feature_bank.hpp"
#include "vtclip/synth.hpp"
#include "vtclip/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace vtclip::cli {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::size_t threads_from_env() {
    const char* env = std::getenv("VT_THREADS");
    if (env == nullptr || *env == '\0') {
        return 1;
    }
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0') {
        throw ConfigError(std::string("VT_THREADS must be a non-negative integer, got '") + env +
                          "'");
    }
    return static_cast<std::size_t>(v);
}

void require_file(const std::string& path) {
    if (!std::filesystem::is_regular_file(path)) {
        throw std::runtime_error("no such file: " + path);
    }
}

FeatureBank load_bank(const std::string& path) {
    require_file(path);
    return read_bank(path);
}

ClassEmbeddings load_texts(const std::string& path) {
    require_file(path);
    return read_class_embeddings(path);
}

VTParams load_model(const std::string& path) {
    require_file(path);
    return read_checkpoint(path);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    f << text;
}

struct TrainFlags {
    std::size_t shots = 16;
    std::size_t batch = 32;
    double lr = 2e-3;
    double momentum = 0.9;
    std::size_t epochs = 200;
    std::string schedule = "cosine";
    std::uint64_t seed = 7;
    std::size_t heads = 8;
    std::size_t layers = 1;

    void attach(CLI::App& app) {
        app.add_option("--shots", shots, "Images per class drawn for training")->capture_default_str();
        app.add_option("--batch", batch, "Batch size")->capture_default_str();
        app.add_option("--lr", lr, "Base learning rate")->capture_default_str();
        app.add_option("--momentum", momentum, "SGD momentum")->capture_default_str();
        app.add_option("--epochs", epochs, "Training epochs")->capture_default_str();
        app.add_option("--schedule", schedule, "Learning-rate schedule")
            ->check(CLI::IsMember({"cosine", "constant"}))
            ->capture_default_str();
        app.add_option("--seed", seed, "Seed for shots, init and shuffling")->capture_default_str();
        app.add_option("--heads", heads, "Attention heads")->capture_default_str();
        app.add_option("--layers", layers, "Stacked decoder layers")->capture_default_str();
    }

    TrainConfig config(std::size_t threads) const {
        TrainConfig cfg;
        cfg.shots = shots;
        cfg.batch_size = batch;
        cfg.lr = lr;
        cfg.momentum = momentum;
        cfg.epochs = epochs;
        cfg.schedule = schedule == "constant" ? Schedule::Constant : Schedule::Cosine;
        cfg.seed = seed;
        cfg.heads = heads;
        cfg.layers = layers;
        cfg.threads = threads;
        return cfg;
    }
};

std::vector<std::size_t> default_sweep(AblationAxis axis) {
    if (axis == AblationAxis::Heads) {
        return {4, 8, 16, 32};
    }
    return {1, 2, 3, 4};
}

}  // namespace

void write_attention_csv(const Matrix& map, const std::filesystem::path& path) {
    std::ostringstream s;
    for (std::size_t r = 0; r < map.rows(); ++r) {
        for (std::size_t c = 0; c < map.cols(); ++c) {
            s << (c == 0 ? "" : ",") << fmt(map(r, c));
        }
        s << '\n';
    }
    write_text(path, s.str());
}

void write_attention_pgm(const Matrix& map, const std::filesystem::path& path) {
    const auto vals = map.values();
    const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
    const double lo = vals.empty() ? 0.0 : *lo_it;
    const double range = vals.empty() ? 0.0 : *hi_it - lo;
    std::string bytes = "P5\n" + std::to_string(map.cols()) + " " + std::to_string(map.rows()) +
                        "\n255\n";
    for (double v : vals) {
        const double scaled = range > 0.0 ? (v - lo) / range * 255.0 : 0.0;
        bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
    }
    write_text(path, bytes);
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Visual-guided text head over frozen CLIP feature banks", "vt"};
    app.require_subcommand(1);
    app.fallthrough();
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Human-readable progress on stderr");

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic train/test/texts triple");
    SynthConfig synth_cfg;
    std::string synth_out;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--k", synth_cfg.num_classes, "Classes")->capture_default_str();
    synth->add_option("--dim", synth_cfg.global_dim, "Global feature width D")->capture_default_str();
    synth->add_option("--spatial-dim", synth_cfg.spatial_dim, "Spatial token width D_s")
        ->capture_default_str();
    synth->add_option("--grid-h", synth_cfg.grid_h, "Token grid height")->capture_default_str();
    synth->add_option("--grid-w", synth_cfg.grid_w, "Token grid width")->capture_default_str();
    synth->add_option("--informative", synth_cfg.informative_tokens, "Planted tokens per image")
        ->capture_default_str();
    synth->add_option("--noise", synth_cfg.noise_sigma, "Noise sigma")->capture_default_str();
    synth->add_option("--train-per-class", synth_cfg.train_per_class)->capture_default_str();
    synth->add_option("--test-per-class", synth_cfg.test_per_class)->capture_default_str();
    synth->add_option("--seed", synth_cfg.seed, "Generator seed")->capture_default_str();
    synth->add_option("--template", synth_cfg.prompt_template, "Prompt template")
        ->capture_default_str();

    // train
    auto* train_cmd = app.add_subcommand("train", "Few-shot training of the head");
    TrainFlags train_flags;
    std::string bank_path, test_path, texts_path, out_path, report_path;
    train_cmd->add_option("--bank", bank_path, "Training feature bank (.vtfb)")->required();
    train_cmd->add_option("--test", test_path, "Test feature bank (.vtfb)");
    train_cmd->add_option("--texts", texts_path, "Class embeddings (.vtte)")->required();
    train_cmd->add_option("--out", out_path, "Checkpoint to write (.vtpm)");
    train_cmd->add_option("--report", report_path, "Training report to write (key=value)");
    train_flags.attach(*train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a trained head");
    std::string model_path;
    eval_cmd->add_option("--model", model_path, "Checkpoint (.vtpm)")->required();
    eval_cmd->add_option("--bank", bank_path, "Feature bank (.vtfb)")->required();
    eval_cmd->add_option("--texts", texts_path, "Class embeddings (.vtte)")->required();

    // zeroshot
    auto* zs_cmd = app.add_subcommand("zeroshot", "Accuracy of plain cosine matching");
    zs_cmd->add_option("--bank", bank_path, "Feature bank (.vtfb)")->required();
    zs_cmd->add_option("--texts", texts_path, "Class embeddings (.vtte)")->required();

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "Heads or layers sweep");
    std::string axis_name;
    std::vector<std::size_t> sweep_values;
    ablate_cmd->add_option("--bank", bank_path, "Training feature bank (.vtfb)")->required();
    ablate_cmd->add_option("--test", test_path, "Test feature bank (.vtfb)")->required();
    ablate_cmd->add_option("--texts", texts_path, "Class embeddings (.vtte)")->required();
    ablate_cmd->add_option("--axis", axis_name, "heads or layers")
        ->required()
        ->check(CLI::IsMember({"heads", "layers"}));
    ablate_cmd->add_option("--values", sweep_values, "Comma-separated sweep values")
        ->delimiter(',');
    ablate_cmd->add_option("--out", out_path, "CSV to write; stdout when omitted");
    train_flags.attach(*ablate_cmd);

    // attnmap
    auto* attn_cmd = app.add_subcommand("attnmap", "Export one image's attention map");
    std::size_t image_idx = 0;
    std::optional<std::size_t> class_idx;
    std::size_t layer_idx = 0;
    attn_cmd->add_option("--model", model_path, "Checkpoint (.vtpm)")->required();
    attn_cmd->add_option("--bank", bank_path, "Feature bank (.vtfb)")->required();
    attn_cmd->add_option("--texts", texts_path, "Class embeddings (.vtte)")->required();
    attn_cmd->add_option("--image", image_idx, "Image index")->required();
    attn_cmd->add_option("--class", class_idx, "Class index (default: the image's label)");
    attn_cmd->add_option("--layer", layer_idx, "Layer index")->capture_default_str();
    attn_cmd->add_option("--out", out_path, "Output prefix; writes <prefix>.csv and <prefix>.pgm")
        ->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    try {
        const std::size_t threads = threads_from_env();

        if (synth->parsed()) {
            const auto data = synth_bank(synth_cfg);
            const std::filesystem::path dir(synth_out);
            std::filesystem::create_directories(dir);
            write_bank(data.train, dir / "train.vtfb");
            write_bank(data.test, dir / "test.vtfb");
            write_class_embeddings(data.texts, dir / "texts.vtte");
            out << "train_bank=" << (dir / "train.vtfb").string() << '\n'
                << "test_bank=" << (dir / "test.vtfb").string() << '\n'
                << "texts=" << (dir / "texts.vtte").string() << '\n'
                << "train_images=" << data.train.size() << '\n'
                << "test_images=" << data.test.size() << '\n';
            return kExitOk;
        }

        if (train_cmd->parsed()) {
            const FeatureBank train_bank = load_bank(bank_path);
            const ClassEmbeddings texts = load_texts(texts_path);
            std::optional<FeatureBank> test_bank;
            if (!test_path.empty()) {
                test_bank = load_bank(test_path);
            }
            const auto result = train(train_bank, texts, train_flags.config(threads),
                                      test_bank ? &*test_bank : nullptr);
            const auto& rep = result.report;
            if (verbose) {
                err << "epoch  lr            mean_loss\n";
                for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) {
                    err << std::setw(5) << e << "  " << std::setw(12)
                        << scheduled_lr(rep.config, e) << "  " << rep.epoch_loss[e] << '\n';
                }
                err << "wall time " << rep.wall_time_seconds << " s\n";
            }
            if (!out_path.empty()) {
                write_checkpoint(result.params, out_path);
            }
            if (!report_path.empty()) {
                write_text(report_path, rep.to_text(false));
            }
            out << "initial_loss=" << fmt(rep.epoch_loss.front()) << '\n'
                << "final_loss=" << fmt(rep.epoch_loss.back()) << '\n'
                << "train_accuracy=" << fmt(rep.train_accuracy) << '\n';
            if (rep.test_accuracy) {
                out << "test_accuracy=" << fmt(*rep.test_accuracy) << '\n';
            }
            char hex[32];
            std::snprintf(hex, sizeof hex, "%016llx",
                          static_cast<unsigned long long>(rep.param_checksum));
            out << "param_checksum=" << hex << '\n';
            return kExitOk;
        }

        if (eval_cmd->parsed()) {
            const VTParams params = load_model(model_path);
            const FeatureBank bank = load_bank(bank_path);
            const ClassEmbeddings texts = load_texts(texts_path);
            out << "test_accuracy=" << fmt(evaluate(bank, texts, params, kDefaultLogitScale, threads))
                << '\n';
            return kExitOk;
        }

        if (zs_cmd->parsed()) {
            const FeatureBank bank = load_bank(bank_path);
            const ClassEmbeddings texts = load_texts(texts_path);
            out << "zeroshot_accuracy=" << fmt(zero_shot_accuracy(bank, texts)) << '\n';
            return kExitOk;
        }

        if (ablate_cmd->parsed()) {
            const FeatureBank train_bank = load_bank(bank_path);
            const FeatureBank test_bank = load_bank(test_path);
            const ClassEmbeddings texts = load_texts(texts_path);
            const AblationAxis axis = parse_ablation_axis(axis_name);
            if (sweep_values.empty()) {
                sweep_values = default_sweep(axis);
            }
            const auto cells = ablate(train_bank, test_bank, texts, axis, sweep_values,
                                      train_flags.config(threads));
            const std::string csv = ablation_csv(cells);
            if (out_path.empty()) {
                out << csv;
            } else {
                write_text(out_path, csv);
                out << "csv=" << out_path << '\n';
            }
            bool all_ok = true;
            for (const auto& c : cells) {
                if (!c.ok) {
                    all_ok = false;
                    err << "error: " << to_string(axis) << "=" << c.value << ": " << c.error << '\n';
                } else if (verbose) {
                    err << to_string(axis) << "=" << c.value << " test_accuracy=" << c.test_accuracy
                        << " loss " << c.initial_loss << " -> " << c.final_loss << '\n';
                }
            }
            return all_ok ? kExitOk : kExitRuntime;
        }

        if (attn_cmd->parsed()) {
            const VTParams params = load_model(model_path);
            const FeatureBank bank = load_bank(bank_path);
            const ClassEmbeddings texts = load_texts(texts_path);
            if (image_idx >= bank.size()) {
                throw std::out_of_range("image index " + std::to_string(image_idx) +
                                        " out of range (bank has " + std::to_string(bank.size()) +
                                        " images)");
            }
            if (params.dim != bank.global_dim || params.spatial_dim != bank.spatial_dim) {
                throw DimensionError("model does not match bank dimensions");
            }
            const std::size_t cls = class_idx.value_or(bank.images[image_idx].label);
            if (cls >= texts.num_classes()) {
                throw std::out_of_range("class index " + std::to_string(cls) +
                                        " out of range (have " +
                                        std::to_string(texts.num_classes()) + " classes)");
            }
            const auto fwd = vt_forward(texts.matrix(), bank.spatial_tokens(image_idx), params);
            const Matrix map = attention_map(fwd.trace, cls, layer_idx, bank.grid_h, bank.grid_w);
            const std::vector<Matrix> adapted{fwd.output};
            const Logits logits = vt_logits(bank.global_row(image_idx), adapted, kDefaultLogitScale);
            const Matrix probs = logits.probabilities();

            const std::string csv_path = out_path + ".csv";
            const std::string pgm_path = out_path + ".pgm";
            write_attention_csv(map, csv_path);
            write_attention_pgm(map, pgm_path);
            out << "csv=" << csv_path << '\n'
                << "pgm=" << pgm_path << '\n'
                << "image=" << image_idx << '\n'
                << "label=" << bank.images[image_idx].label << '\n'
                << "class=" << cls << '\n'
                << "predicted=" << predict(logits).front() << '\n'
                << "probabilities=";
            for (std::size_t k = 0; k < probs.cols(); ++k) {
                out << (k == 0 ? "" : ",") << fmt(probs(0, k));
            }
            out << '\n';
            return kExitOk;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace vtclip::cli
