// Copyright 2026 The vtclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

namespace vtclip {

/// Operand shapes do not agree; the message names both shapes.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration value violates its documented constraints.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace vtclip
