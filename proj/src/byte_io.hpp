// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian encoding helpers shared by the binary file formats.

#pragma once

#include "vtclip/feature_bank.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vtclip::detail {

class ByteWriter {
public:
    void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

    void u8(std::uint8_t v) { bytes_.push_back(v); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    void f32s(std::span<const float> vs) {
        for (float v : vs) {
            f32(v);
        }
    }

    void string(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }

    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& bytes, std::string what)
        : bytes_(bytes), what_(std::move(what)) {}

    void expect_magic(std::string_view m) {
        if (bytes_.size() < m.size() ||
            std::memcmp(bytes_.data(), m.data(), m.size()) != 0) {
            throw FormatError(FormatErrorKind::BadMagic,
                              what_ + ": bad magic, expected \"" + std::string(m) + "\"");
        }
        pos_ = m.size();
    }

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    void f32s(std::span<float> out) {
        need(out.size() * 4);
        for (auto& v : out) {
            v = f32();
        }
    }

    std::string string() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t position() const { return pos_; }

    void need(std::uint64_t n) const {
        if (n > remaining()) {
            throw FormatError(FormatErrorKind::Truncated,
                              what_ + ": truncated at byte " + std::to_string(pos_) + " (needed " +
                                  std::to_string(n) + ", have " + std::to_string(remaining()) +
                                  ")");
        }
    }

    void expect_end() const {
        if (remaining() != 0) {
            throw FormatError(FormatErrorKind::InvalidContent,
                              what_ + ": " + std::to_string(remaining()) + " trailing bytes");
        }
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

/// a * b, or DimensionOverflow if the product exceeds `limit`.
std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, std::uint64_t limit,
                          const std::string& what);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);

}  // namespace vtclip::detail
