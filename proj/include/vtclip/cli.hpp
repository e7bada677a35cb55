// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "vtclip/matrix.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

namespace vtclip::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point shared by the `vt` binary and the tests. `args` excludes the
/// program name. Machine-readable `key=value` lines go to `out`; diagnostics
/// and --verbose tables go to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// Writes `map` as CSV (one grid row per line) and as a binary PGM scaled
/// so the minimum maps to 0 and the maximum to 255. A constant map is all 0.
void write_attention_csv(const Matrix& map, const std::filesystem::path& path);
void write_attention_pgm(const Matrix& map, const std::filesystem::path& path);

}  // namespace vtclip::cli
