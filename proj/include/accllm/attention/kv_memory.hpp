// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "accllm/core/common.hpp"
#include "accllm/core/model.hpp"

namespace accllm::attn {

inline constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

/// KV-cache footprint. Code bytes and scale metadata are kept apart so the
/// headline figures (which ignore scales) can be quoted on their own.
struct KvMemory {
    double code_bytes = 0.0;
    double scale_bytes = 0.0;

    double total() const { return code_bytes + scale_bytes; }
    double code_gib() const { return code_bytes / kGiB; }
};

/// 2 * n_layers * tokens * h * d_k * kv_bits / 8 code bytes, plus one scale per
/// (layer, token, head) for K and V when kv_bits < 16.
inline KvMemory kv_mem_bytes(const ModelDims& dims, std::int64_t tokens_stored, int kv_bits,
                             std::int64_t bytes_per_scale = 2) {
    dims.validate();
    if (tokens_stored < 0) throw ConfigError("kv_mem_bytes: tokens_stored must be >= 0");
    if (kv_bits != 2 && kv_bits != 4 && kv_bits != 8 && kv_bits != 16)
        throw ConfigError("kv_mem_bytes: kv_bits must be one of 2, 4, 8, 16");
    const double elems = 2.0 * static_cast<double>(dims.n_layers * tokens_stored * dims.h * dims.d_k);
    KvMemory m;
    m.code_bytes = elems * kv_bits / 8.0;
    if (kv_bits < 16)
        m.scale_bytes = 2.0 * static_cast<double>(dims.n_layers * tokens_stored * dims.h * bytes_per_scale);
    return m;
}

}  // namespace accllm::attn
