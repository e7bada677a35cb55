// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vtclip/vt_attention.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vtclip {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderSize = 4 + 5 * 4;

/// VTPM layout (little-endian): "VTPM", u32 version, u32 D, u32 D_s, u32 H,
/// u32 L, then every parameter array as f32 in for_each_tensor order.
/// Parameters are rounded to f32 on write; errors are FormatError.
std::vector<std::uint8_t> encode_checkpoint(const VTParams& params);
VTParams decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const VTParams& params, const std::filesystem::path& path);
VTParams read_checkpoint(const std::filesystem::path& path);

}  // namespace vtclip
