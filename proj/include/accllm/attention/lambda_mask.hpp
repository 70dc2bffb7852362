// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "accllm/core/common.hpp"
#include "accllm/core/reference.hpp"

namespace accllm::attn {

inline constexpr std::size_t kDefaultSinks = 4;
inline constexpr std::size_t kDefaultWindow = 2044;

/// True when query i keeps key j under the sink + sliding-window pattern.
inline constexpr bool lambda_keeps(std::size_t i, std::size_t j, std::size_t n_sink, std::size_t window) {
    return j <= i && (j < n_sink || i - j < window);
}

/// l x l mask: i attends j iff j <= i and (j < n_sink or i - j < window).
inline AttentionMask lambda_mask(std::size_t l, std::size_t n_sink = kDefaultSinks,
                                 std::size_t window = kDefaultWindow) {
    if (l < 1) throw ConfigError("lambda_mask: l must be >= 1");
    AttentionMask m(l);
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j <= i; ++j) m.set(i, j, lambda_keeps(i, j, n_sink, window));
    return m;
}

/// Plain PGM (P2) rendering of a mask, 1 = attended, for quick visual checks.
inline std::string mask_to_pgm(const AttentionMask& m) {
    const std::string n = std::to_string(m.size());
    std::string out = "P2\n" + n + " " + n + "\n1\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m.size(); ++j) {
            if (j) out += ' ';
            out += m(i, j) ? '1' : '0';
        }
        out += '\n';
    }
    return out;
}

}  // namespace accllm::attn
