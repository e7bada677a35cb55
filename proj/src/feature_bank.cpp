// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtclip/feature_bank.hpp"

#include "byte_io.hpp"
#include "vtclip/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

namespace vtclip {

namespace detail {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t limit,
                          const std::string& what) {
    if (a != 0 && b > limit / a) {
        throw FormatError(FormatErrorKind::DimensionOverflow,
                          what + ": dimension product " + std::to_string(a) + " x " +
                              std::to_string(b) + " exceeds " + std::to_string(limit));
    }
    return a * b;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError(FormatErrorKind::Io, "write failed: " + path.string());
    }
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

namespace {

constexpr std::string_view kBankMagic = "VTFB";
constexpr std::string_view kTextMagic = "VTTE";
// Largest element count accepted for any single stored matrix.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

void invalid(const std::string& msg) { throw FormatError(FormatErrorKind::InvalidContent, msg); }

bool finite(std::span<const float> vs) {
    return std::all_of(vs.begin(), vs.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace

const char* to_string(FormatErrorKind kind) {
    switch (kind) {
        case FormatErrorKind::Io:
            return "io";
        case FormatErrorKind::BadMagic:
            return "bad magic";
        case FormatErrorKind::VersionMismatch:
            return "version mismatch";
        case FormatErrorKind::Truncated:
            return "truncated";
        case FormatErrorKind::DimensionOverflow:
            return "dimension overflow";
        case FormatErrorKind::InvalidContent:
            return "invalid content";
    }
    return "unknown";
}

FormatError::FormatError(FormatErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

Matrix FeatureBank::global_matrix() const {
    Matrix m(images.size(), global_dim);
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::copy(images[i].global.begin(), images[i].global.end(), m.row(i).begin());
    }
    return m;
}

Matrix FeatureBank::global_row(std::size_t image) const {
    const auto& g = images.at(image).global;
    return Matrix(1, g.size(), std::vector<double>(g.begin(), g.end()));
}

Matrix FeatureBank::spatial_tokens(std::size_t image) const {
    const auto& s = images.at(image).spatial;
    return Matrix(num_tokens, spatial_dim, std::vector<double>(s.begin(), s.end()));
}

std::vector<std::uint32_t> FeatureBank::labels() const {
    std::vector<std::uint32_t> out;
    out.reserve(images.size());
    for (const auto& im : images) {
        out.push_back(im.label);
    }
    return out;
}

void FeatureBank::validate() const {
    if (static_cast<std::uint64_t>(grid_h) * grid_w != num_tokens) {
        invalid("feature bank: grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                " does not match " + std::to_string(num_tokens) + " tokens");
    }
    if (num_classes == 0 || global_dim == 0 || spatial_dim == 0 || num_tokens == 0) {
        invalid("feature bank: zero dimension in header");
    }
    const std::size_t spatial_len = static_cast<std::size_t>(num_tokens) * spatial_dim;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& im = images[i];
        if (im.label >= num_classes) {
            invalid("feature bank: image " + std::to_string(i) + " has label " +
                    std::to_string(im.label) + " outside [0, " + std::to_string(num_classes) +
                    ")");
        }
        if (im.global.size() != global_dim || im.spatial.size() != spatial_len) {
            invalid("feature bank: image " + std::to_string(i) + " has wrong feature sizes");
        }
        if (!finite(im.global) || !finite(im.spatial)) {
            invalid("feature bank: image " + std::to_string(i) + " has non-finite values");
        }
    }
}

Matrix ClassEmbeddings::matrix() const {
    return Matrix(num_classes(), dim, std::vector<double>(rows.begin(), rows.end()));
}

void ClassEmbeddings::validate() const {
    if (num_classes() < 2) {
        invalid("class embeddings: need at least 2 classes, got " +
                std::to_string(num_classes()));
    }
    if (dim == 0 || rows.size() != num_classes() * static_cast<std::size_t>(dim)) {
        invalid("class embeddings: row data does not match K x D");
    }
    if (!finite(rows)) {
        invalid("class embeddings: non-finite values");
    }
}

std::uint64_t bank_record_size(std::uint32_t global_dim, std::uint32_t num_tokens,
                               std::uint32_t spatial_dim) {
    return 4 + 4 * static_cast<std::uint64_t>(global_dim) +
           4 * static_cast<std::uint64_t>(num_tokens) * spatial_dim;
}

std::vector<std::uint8_t> encode_bank(const FeatureBank& bank) {
    bank.validate();
    detail::ByteWriter w;
    w.magic(kBankMagic);
    w.u32(kBankVersion);
    w.u32(bank.num_classes);
    w.u32(bank.global_dim);
    w.u32(bank.spatial_dim);
    w.u32(bank.num_tokens);
    w.u32(bank.grid_h);
    w.u32(bank.grid_w);
    w.u32(static_cast<std::uint32_t>(bank.images.size()));
    w.u8(static_cast<std::uint8_t>(bank.split));
    for (const auto& im : bank.images) {
        w.u32(im.label);
        w.f32s(im.global);
        w.f32s(im.spatial);
    }
    return std::move(w.bytes());
}

FeatureBank decode_bank(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "VTFB");
    r.expect_magic(kBankMagic);
    const std::uint32_t version = r.u32();
    if (version != kBankVersion) {
        throw FormatError(FormatErrorKind::VersionMismatch,
                          "VTFB: unsupported version " + std::to_string(version));
    }
    FeatureBank bank;
    bank.num_classes = r.u32();
    bank.global_dim = r.u32();
    bank.spatial_dim = r.u32();
    bank.num_tokens = r.u32();
    bank.grid_h = r.u32();
    bank.grid_w = r.u32();
    const std::uint32_t num_images = r.u32();
    const std::uint8_t tag = r.u8();
    if (tag > 1) {
        invalid("VTFB: unknown split tag " + std::to_string(tag));
    }
    bank.split = static_cast<SplitTag>(tag);

    const std::uint64_t spatial_len =
        detail::checked_mul(bank.num_tokens, bank.spatial_dim, kMaxElements, "VTFB spatial");
    detail::checked_mul(bank.global_dim, 1, kMaxElements, "VTFB global");
    const std::uint64_t record = 4 + 4 * static_cast<std::uint64_t>(bank.global_dim) + 4 * spatial_len;
    r.need(detail::checked_mul(record, num_images, std::numeric_limits<std::uint64_t>::max(),
                               "VTFB payload"));

    bank.images.resize(num_images);
    for (auto& im : bank.images) {
        im.label = r.u32();
        im.global.resize(bank.global_dim);
        r.f32s(im.global);
        im.spatial.resize(spatial_len);
        r.f32s(im.spatial);
    }
    r.expect_end();
    bank.validate();
    return bank;
}

std::vector<std::uint8_t> encode_class_embeddings(const ClassEmbeddings& texts) {
    texts.validate();
    detail::ByteWriter w;
    w.magic(kTextMagic);
    w.u32(kTextVersion);
    w.u32(static_cast<std::uint32_t>(texts.num_classes()));
    w.u32(texts.dim);
    w.string(texts.prompt_template);
    for (const auto& name : texts.class_names) {
        w.string(name);
    }
    w.f32s(texts.rows);
    return std::move(w.bytes());
}

ClassEmbeddings decode_class_embeddings(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "VTTE");
    r.expect_magic(kTextMagic);
    const std::uint32_t version = r.u32();
    if (version != kTextVersion) {
        throw FormatError(FormatErrorKind::VersionMismatch,
                          "VTTE: unsupported version " + std::to_string(version));
    }
    const std::uint32_t k = r.u32();
    ClassEmbeddings texts;
    texts.dim = r.u32();
    const std::uint64_t n = detail::checked_mul(k, texts.dim, kMaxElements, "VTTE rows");
    // Each class needs at least its 4-byte name length.
    r.need(4 * static_cast<std::uint64_t>(k));
    texts.prompt_template = r.string();
    texts.class_names.reserve(k);
    for (std::uint32_t i = 0; i < k; ++i) {
        texts.class_names.push_back(r.string());
    }
    texts.rows.resize(n);
    r.f32s(texts.rows);
    r.expect_end();
    texts.validate();
    return texts;
}

void write_bank(const FeatureBank& bank, const std::filesystem::path& path) {
    detail::write_file(path, encode_bank(bank));
}

FeatureBank read_bank(const std::filesystem::path& path) {
    return decode_bank(detail::read_file(path));
}

void write_class_embeddings(const ClassEmbeddings& texts, const std::filesystem::path& path) {
    detail::write_file(path, encode_class_embeddings(texts));
}

ClassEmbeddings read_class_embeddings(const std::filesystem::path& path) {
    return decode_class_embeddings(detail::read_file(path));
}

std::uint64_t checksum(const FeatureBank& bank) { return detail::fnv1a(encode_bank(bank)); }

std::uint64_t checksum(const ClassEmbeddings& texts) {
    return detail::fnv1a(encode_class_embeddings(texts));
}

std::vector<std::size_t> sample_shots(const FeatureBank& bank, std::size_t n_shots,
                                      std::uint64_t seed) {
    if (n_shots == 0) {
        throw ShotSamplingError("sample_shots: n_shots must be at least 1");
    }
    std::vector<std::vector<std::size_t>> by_class(bank.num_classes);
    for (std::size_t i = 0; i < bank.images.size(); ++i) {
        by_class.at(bank.images[i].label).push_back(i);
    }
    for (std::size_t k = 0; k < by_class.size(); ++k) {
        if (by_class[k].size() < n_shots) {
            throw ShotSamplingError("sample_shots: class " + std::to_string(k) + " has " +
                                    std::to_string(by_class[k].size()) + " images, need " +
                                    std::to_string(n_shots));
        }
    }
    Rng rng(seed);
    std::vector<std::size_t> out;
    out.reserve(n_shots * by_class.size());
    for (auto& pool : by_class) {
        for (std::size_t i = 0; i < n_shots; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        std::sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_shots));
        out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_shots));
    }
    return out;
}

}  // namespace vtclip
