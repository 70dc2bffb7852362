// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace accllm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be positive definite is not.
class SingularMatrixError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration, layout or scenario.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Smallest scale any quantizer emits; used for all-zero groups and tokens.
inline constexpr double kScaleFloor = std::numeric_limits<double>::epsilon();

/// Round half away from zero. std::round already has these semantics, the
/// wrapper pins the choice in one place.
inline double round_half_away(double v) { return std::round(v); }

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

inline void require(bool cond, const std::string& what) {
    if (!cond) throw DimensionError(what);
}

}  // namespace accllm
