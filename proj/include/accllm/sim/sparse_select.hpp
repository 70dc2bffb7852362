// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "accllm/compress/sparse24.hpp"
#include "accllm/core/common.hpp"

namespace accllm::sim {

/// Gathers the retained inputs of one weight row: for every block of 4
/// inputs, the two positions kept by `row` of the pattern, in block order.
template <typename T>
std::vector<T> sparse_select(std::span<const T> inputs, const compress::SparsePattern24& pattern, std::size_t row) {
    require(inputs.size() == pattern.cols(), "sparse_select: input length must equal the pattern width");
    std::vector<T> out;
    out.reserve(pattern.packed_cols());
    for (std::size_t b = 0; b < pattern.blocks_per_row(); ++b) {
        const auto [first, second] = pattern.positions(row, b);
        out.push_back(inputs[b * compress::kBlock + first]);
        out.push_back(inputs[b * compress::kBlock + second]);
    }
    return out;
}

}  // namespace accllm::sim
