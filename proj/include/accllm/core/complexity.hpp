// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "accllm/core/common.hpp"
#include "accllm/core/model.hpp"

namespace accllm {

/// Multiply-accumulate counts per linear kind, summed over all layers.
struct FlopsBreakdown {
    std::int64_t qkvo = 0;
    std::int64_t attention = 0;
    std::int64_t ffn = 0;

    std::int64_t total() const { return qkvo + attention + ffn; }
    std::int64_t of(LinearKind k) const {
        switch (k) {
            case LinearKind::qkvo: return qkvo;
            case LinearKind::attention: return attention;
            case LinearKind::ffn: return ffn;
        }
        return 0;
    }
    /// Share of the projection + FFN layers in the total.
    double linear_share() const { return static_cast<double>(qkvo + ffn) / static_cast<double>(total()); }
};

/// Per-layer MAC count of one kind. For decode, `l` is the number of tokens
/// already in the history; the current token adds one more key.
inline std::int64_t layer_macs(LinearKind kind, Stage stage, const ModelDims& dims, std::int64_t l) {
    const std::int64_t d = dims.d;
    switch (kind) {
        case LinearKind::qkvo: return stage == Stage::prefill ? 4 * l * d * d : 4 * d * d;
        case LinearKind::attention: return stage == Stage::prefill ? l * (l + 1) * d : 2 * (l + 1) * d;
        case LinearKind::ffn: return stage == Stage::prefill ? 2 * l * d * dims.d_ffn : 2 * d * dims.d_ffn;
    }
    return 0;
}

inline FlopsBreakdown flops_breakdown(const ModelDims& dims, std::int64_t l, Stage stage) {
    dims.validate();
    if (l < 1) throw ConfigError("flops_breakdown: l must be >= 1");
    FlopsBreakdown fb;
    fb.qkvo = dims.n_layers * layer_macs(LinearKind::qkvo, stage, dims, l);
    fb.attention = dims.n_layers * layer_macs(LinearKind::attention, stage, dims, l);
    fb.ffn = dims.n_layers * layer_macs(LinearKind::ffn, stage, dims, l);
    return fb;
}

/// Storage conventions for quantization metadata.
inline constexpr std::int64_t kWeightGroupSize = 64;
inline constexpr std::int64_t kScaleBytes = 2;      // fp16 scale
inline constexpr std::int64_t kZeroPointBytes = 1;  // integer zero point

struct Precision {
    int weight_bits = 16;
    int act_bits = 16;
    int kv_bits = 16;
    /// Count scale / zero-point bytes. Headline comparisons turn this off.
    bool include_metadata = true;
};

inline void validate_bits(int bits) {
    if (bits != 2 && bits != 4 && bits != 8 && bits != 16)
        throw ConfigError("bit-width must be one of 2, 4, 8, 16");
}

/// Bytes of a weight matrix stored out x in, group-wise along the input axis.
inline double weight_bytes(std::int64_t out, std::int64_t in, int bits, bool metadata,
                           std::int64_t group = kWeightGroupSize) {
    double bytes = static_cast<double>(out * in) * bits / 8.0;
    if (metadata && bits < 16) bytes += static_cast<double>(out * ceil_div(in, group) * (kScaleBytes + kZeroPointBytes));
    return bytes;
}

/// Bytes of `tokens` activation rows of width `width`, quantized per token.
inline double activation_bytes(std::int64_t tokens, std::int64_t width, int bits, bool metadata) {
    double bytes = static_cast<double>(tokens * width) * bits / 8.0;
    if (metadata && bits < 16) bytes += static_cast<double>(tokens * (kScaleBytes + kZeroPointBytes));
    return bytes;
}

/// Bytes of one K or V tensor for `tokens` tokens, one symmetric scale per (token, head).
inline double kv_tensor_bytes(std::int64_t tokens, const ModelDims& dims, int bits, bool metadata) {
    double bytes = static_cast<double>(tokens * dims.d) * bits / 8.0;
    if (metadata && bits < 16) bytes += static_cast<double>(tokens * dims.h * kScaleBytes);
    return bytes;
}

/// Unique operand and output bytes of one layer's worth of `kind`, assuming
/// ideal reuse inside the layer.
inline double layer_traffic_bytes(LinearKind kind, Stage stage, const ModelDims& dims, std::int64_t l,
                                  const Precision& p) {
    const std::int64_t n = stage == Stage::prefill ? l : 1;
    const std::int64_t d = dims.d;
    const bool md = p.include_metadata;
    switch (kind) {
        case LinearKind::qkvo:
            return 4.0 * weight_bytes(d, d, p.weight_bits, md) + 4.0 * activation_bytes(n, d, p.act_bits, md) +
                   2.0 * kv_tensor_bytes(n, dims, p.kv_bits, md);
        case LinearKind::attention: {
            const std::int64_t keys = stage == Stage::prefill ? l : l + 1;
            return 2.0 * activation_bytes(n, d, p.act_bits, md) + 2.0 * kv_tensor_bytes(keys, dims, p.kv_bits, md);
        }
        case LinearKind::ffn:
            return weight_bytes(dims.d_ffn, d, p.weight_bits, md) + weight_bytes(d, dims.d_ffn, p.weight_bits, md) +
                   2.0 * activation_bytes(n, d, p.act_bits, md) + activation_bytes(n, dims.d_ffn, p.act_bits, md);
    }
    return 0.0;
}

/// Operations (2 per MAC) per byte of memory traffic.
inline double operation_intensity(LinearKind kind, Stage stage, const ModelDims& dims, std::int64_t l,
                                  const Precision& p) {
    dims.validate();
    validate_bits(p.weight_bits);
    validate_bits(p.act_bits);
    validate_bits(p.kv_bits);
    if (l < 1) throw ConfigError("operation_intensity: l must be >= 1");
    const double ops = 2.0 * static_cast<double>(layer_macs(kind, stage, dims, l));
    return ops / layer_traffic_bytes(kind, stage, dims, l, p);
}

}  // namespace accllm
