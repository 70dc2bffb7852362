// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "accllm/core/common.hpp"
#include "accllm/core/matrix.hpp"

namespace accllm {

enum class QuantScheme {
    group_asymmetric,              // contiguous groups along each row, scale + zero point
    per_token_asymmetric,          // one scale + zero point per row
    per_token_per_head_symmetric,  // one scale per (row, head slice), no zero point
};

inline constexpr std::string_view to_string(QuantScheme s) {
    switch (s) {
        case QuantScheme::group_asymmetric: return "group_asymmetric";
        case QuantScheme::per_token_asymmetric: return "per_token_asymmetric";
        case QuantScheme::per_token_per_head_symmetric: return "per_token_per_head_symmetric";
    }
    return "?";
}

/// Integer tensor with its scale / zero-point metadata. Every scheme is
/// expressed as "groups of `group_size` consecutive columns within a row";
/// per-token uses group_size == cols and per-head uses group_size == d_k.
struct QuantTensor {
    int bits = 8;
    QuantScheme scheme = QuantScheme::per_token_asymmetric;
    std::size_t group_size = 1;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int32_t> values;       // rows * cols, row-major
    std::vector<double> scales;             // rows * groups_per_row()
    std::vector<std::int32_t> zero_points;  // same length as scales, empty if symmetric

    bool symmetric() const { return scheme == QuantScheme::per_token_per_head_symmetric; }

    std::int32_t qmin() const { return symmetric() ? -((1 << (bits - 1)) - 1) : 0; }
    std::int32_t qmax() const { return symmetric() ? (1 << (bits - 1)) - 1 : (1 << bits) - 1; }

    std::size_t groups_per_row() const { return (cols + group_size - 1) / group_size; }
    std::size_t group_of(std::size_t r, std::size_t c) const { return r * groups_per_row() + c / group_size; }

    std::int32_t code(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double scale(std::size_t r, std::size_t c) const { return scales[group_of(r, c)]; }
    std::int32_t zero(std::size_t r, std::size_t c) const {
        return symmetric() ? 0 : zero_points[group_of(r, c)];
    }

    double dequant(std::size_t r, std::size_t c) const {
        const std::size_t g = group_of(r, c);
        const std::int32_t z = symmetric() ? 0 : zero_points[g];
        return scales[g] * static_cast<double>(values[r * cols + c] - z);
    }

    DenseMatrix dequantize() const {
        DenseMatrix m(rows, cols);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) m(r, c) = dequant(r, c);
        return m;
    }

    /// Throws if any structural invariant is violated.
    void validate() const {
        if (bits != 2 && bits != 4 && bits != 8) throw Error("QuantTensor: bits must be 2, 4 or 8");
        if (group_size == 0) throw Error("QuantTensor: group_size must be positive");
        if (values.size() != rows * cols) throw Error("QuantTensor: values length != rows*cols");
        if (scales.size() != rows * groups_per_row()) throw Error("QuantTensor: one scale per group required");
        if (!symmetric() && zero_points.size() != scales.size())
            throw Error("QuantTensor: one zero point per group required");
        if (symmetric() && !zero_points.empty()) throw Error("QuantTensor: symmetric scheme has no zero points");
        for (double s : scales)
            if (!(s > 0.0)) throw Error("QuantTensor: scales must be positive");
        for (std::int32_t v : values)
            if (v < qmin() || v > qmax()) throw Error("QuantTensor: code out of range");
    }

    bool operator==(const QuantTensor&) const = default;
};

}  // namespace accllm
