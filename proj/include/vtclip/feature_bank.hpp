// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vtclip/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtclip {

enum class SplitTag : std::uint8_t { Train = 0, Test = 1 };

/// Frozen encoder outputs for one image. Values are kept at storage precision.
struct ImageRecord {
    std::uint32_t label = 0;
    std::vector<float> global;   // D
    std::vector<float> spatial;  // S x D_s, token-major

    bool operator==(const ImageRecord&) const = default;
};

struct FeatureBank {
    std::uint32_t num_classes = 0;
    std::uint32_t global_dim = 0;
    std::uint32_t spatial_dim = 0;
    std::uint32_t num_tokens = 0;
    std::uint32_t grid_h = 0;
    std::uint32_t grid_w = 0;
    SplitTag split = SplitTag::Train;
    std::vector<ImageRecord> images;

    std::size_t size() const { return images.size(); }

    /// Global features of every image, one row each.
    Matrix global_matrix() const;
    Matrix global_row(std::size_t image) const;
    /// The S x D_s token matrix of one image, upcast to double.
    Matrix spatial_tokens(std::size_t image) const;
    std::vector<std::uint32_t> labels() const;

    /// Throws FormatError(InvalidContent) when an invariant does not hold.
    void validate() const;

    bool operator==(const FeatureBank&) const = default;
};

struct ClassEmbeddings {
    std::uint32_t dim = 0;
    std::string prompt_template;
    std::vector<std::string> class_names;
    std::vector<float> rows;  // K x D

    std::size_t num_classes() const { return class_names.size(); }
    Matrix matrix() const;
    void validate() const;

    bool operator==(const ClassEmbeddings&) const = default;
};

enum class FormatErrorKind {
    Io,
    BadMagic,
    VersionMismatch,
    Truncated,
    DimensionOverflow,
    InvalidContent,
};

const char* to_string(FormatErrorKind kind);

class FormatError : public std::runtime_error {
public:
    FormatError(FormatErrorKind kind, const std::string& message);
    FormatErrorKind kind() const { return kind_; }

private:
    FormatErrorKind kind_;
};

inline constexpr std::uint32_t kBankVersion = 1;
inline constexpr std::uint32_t kTextVersion = 1;

/// Fixed VTFB header: magic, eight u32 fields, one u8 split tag.
inline constexpr std::size_t kBankHeaderSize = 4 + 8 * 4 + 1;

/// Bytes one image occupies in a VTFB payload.
std::uint64_t bank_record_size(std::uint32_t global_dim, std::uint32_t num_tokens,
                               std::uint32_t spatial_dim);

void write_bank(const FeatureBank& bank, const std::filesystem::path& path);
FeatureBank read_bank(const std::filesystem::path& path);

void write_class_embeddings(const ClassEmbeddings& texts, const std::filesystem::path& path);
ClassEmbeddings read_class_embeddings(const std::filesystem::path& path);

/// Serialized forms, shared by the file writers and the checksums.
std::vector<std::uint8_t> encode_bank(const FeatureBank& bank);
FeatureBank decode_bank(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_class_embeddings(const ClassEmbeddings& texts);
ClassEmbeddings decode_class_embeddings(const std::vector<std::uint8_t>& bytes);

/// FNV-1a over the serialized form.
std::uint64_t checksum(const FeatureBank& bank);
std::uint64_t checksum(const ClassEmbeddings& texts);

class ShotSamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Picks exactly `n_shots` distinct images per class. For each class in
/// ascending order, a partial Fisher-Yates over that class's images (in bank
/// order) draws from one Rng(seed). Output is sorted by (class, index).
std::vector<std::size_t> sample_shots(const FeatureBank& bank, std::size_t n_shots,
                                      std::uint64_t seed);

}  // namespace vtclip
