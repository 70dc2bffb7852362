// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "accllm/compress/compressed_linear.hpp"
#include "accllm/core/common.hpp"
#include "accllm/core/matrix.hpp"
#include "accllm/sim/config.hpp"
#include "accllm/sim/dsp_pack.hpp"
#include "accllm/sim/sparse_select.hpp"

namespace accllm::sim {

/// MM: input-output parallel over T token lanes and M output lanes.
/// VM: output parallel over all M * T blocks for a single token.
enum class RceMode { MM, VM };

inline constexpr std::string_view to_string(RceMode m) { return m == RceMode::MM ? "MM" : "VM"; }

/// Useful MACs per multiplier per cycle. pack4 decodes four partial products
/// but only the two diagonal ones belong to the dot product, so it delivers
/// the same factor as pack2.
inline constexpr std::int64_t pack_factor(std::optional<PackMode> m) { return m ? 2 : 1; }

/// Pack mode used for a weight width when packing is enabled.
inline std::optional<PackMode> pack_mode_for(int weight_bits, bool packing) {
    if (!packing) return std::nullopt;
    switch (weight_bits) {
        case 2: return PackMode::pack4_w2a8;
        case 4: return PackMode::pack2_w4q8;
        case 8: return PackMode::pack2_w8;
        default: return std::nullopt;  // 16-bit operands do not pack
    }
}

/// Shape of one linear operation: `tokens` rows of `in` inputs onto `out` outputs.
struct RceOp {
    std::int64_t tokens = 1;
    std::int64_t in = 0;
    std::int64_t out = 0;
};

/// ceil(tokens / T_eff) * ceil(out / M_eff) * ceil(in_eff / R_eff). Sparse
/// 2:4 weights halve in_eff; packing scales R.
inline std::int64_t rce_cycles(const RceOp& op, RceMode mode, bool sparse, std::int64_t packing,
                               const AcceleratorConfig& cfg) {
    if (op.tokens < 1 || op.in < 1 || op.out < 1) throw ConfigError("rce: tokens, in, out must be >= 1");
    if (mode == RceMode::VM && op.tokens != 1) throw ConfigError("rce: VM mode takes exactly one token");
    if (packing < 1) throw ConfigError("rce: packing factor must be >= 1");
    const std::int64_t t_eff = mode == RceMode::MM ? cfg.T : 1;
    const std::int64_t m_eff = mode == RceMode::MM ? cfg.M : cfg.M * cfg.T;
    const std::int64_t in_eff = sparse ? ceil_div(op.in, 2) : op.in;
    return ceil_div(op.tokens, t_eff) * ceil_div(op.out, m_eff) * ceil_div(in_eff, cfg.R * packing);
}

/// On-chip working set of one tile pass: T_eff activation rows and M_eff
/// weight rows of the effective input width, plus 32-bit accumulators.
inline std::int64_t rce_tile_bytes(const RceOp& op, RceMode mode, bool sparse, int weight_bits, int act_bits,
                                   const AcceleratorConfig& cfg) {
    const std::int64_t t_eff = mode == RceMode::MM ? std::min(cfg.T, op.tokens) : 1;
    const std::int64_t m_eff = std::min(mode == RceMode::MM ? cfg.M : cfg.M * cfg.T, op.out);
    const std::int64_t in_eff = sparse ? ceil_div(op.in, 2) : op.in;
    return ceil_div(t_eff * op.in * act_bits, 8) + ceil_div(m_eff * in_eff * weight_bits, 8) + 4 * t_eff * m_eff;
}

struct RceResult {
    DenseMatrix output;
    std::int64_t compute_cycles = 0;
};

namespace detail {

/// Offsets that move unsigned codes into the signed operand range of the DSP.
inline std::int64_t signed_offset(int bits) { return std::int64_t{1} << (bits - 1); }

/// Integer group accumulators of one (token, output) pair computed through
/// the sparse selector and, if enabled, packed DSP products. With signed
/// operands x' = q_x - 2^(bx-1), w' = q_w - 2^(bw-1) and a = 2^(bx-1) - z_x,
/// b = 2^(bw-1) - z_w:  sum (q_x - z_x)(q_w - z_w) = sum x'w' + b sum x' + a sum w' + n a b.
struct RowOperands {
    std::vector<std::int64_t> x;  // signed activation operands at the retained positions
    std::vector<std::int64_t> a;  // activation zero-point correction per position (0 on padding)
    std::vector<bool> real;       // false where the input column is padding
};

inline RowOperands gather(const QuantTensor& xq, const compress::CompressedLinear& layer, std::size_t t, std::size_t o) {
    const std::size_t width = layer.in_padded;
    std::vector<std::size_t> cols(width);
    for (std::size_t c = 0; c < width; ++c) cols[c] = c;
    const std::vector<std::size_t> picked =
        layer.pattern ? sparse_select<std::size_t>(cols, *layer.pattern, o) : cols;
    const std::int64_t off = signed_offset(xq.bits);
    RowOperands r;
    for (std::size_t c : picked) {
        const bool real = c < xq.cols;
        r.real.push_back(real);
        r.x.push_back(real ? xq.code(t, c) - off : 0);
        r.a.push_back(real ? off - xq.zero(t, c) : 0);
    }
    return r;
}

}  // namespace detail

/// Functional execution of a compressed linear layer on the RCE model plus
/// its compute cycles. The output is bit-identical to
/// compressed_linear_forward for every mode, sparsity and packing choice:
/// only the order of exact integer work changes, and rescaling follows the
/// canonical group order.
inline RceResult rce_execute(const QuantTensor& xq, const compress::CompressedLinear& layer, RceMode mode,
                             bool packing, const AcceleratorConfig& cfg) {
    layer.validate();
    cfg.validate();
    require(xq.cols == layer.in_features, "rce_execute: input width mismatch");
    require(xq.scheme == QuantScheme::per_token_asymmetric, "rce_execute: activations must be per-token");
    if (xq.rows < 1) throw ConfigError("rce_execute: at least one token required");
    if (mode == RceMode::VM && xq.rows != 1) throw ConfigError("rce_execute: VM mode takes exactly one token");
    const QuantTensor& w = layer.weight;
    const auto pmode = pack_mode_for(w.bits, packing);
    if (pmode && xq.bits != 8 && xq.bits != 4) throw ConfigError("rce_execute: packing needs A8 or A4 activations");
    const DspPackLayout lay = pmode ? default_layout(*pmode) : DspPackLayout{};
    const RceOp op{static_cast<std::int64_t>(xq.rows), static_cast<std::int64_t>(layer.in_padded),
                   static_cast<std::int64_t>(layer.out_features)};
    if (rce_tile_bytes(op, mode, layer.sparse(), w.bits, xq.bits, cfg) > cfg.onchip_buffer_bytes)
        throw ConfigError("rce_execute: tile working set exceeds the on-chip buffer");

    const std::size_t t_tile = mode == RceMode::MM ? static_cast<std::size_t>(cfg.T) : 1;
    const std::size_t o_tile = static_cast<std::size_t>(mode == RceMode::MM ? cfg.M : cfg.M * cfg.T);
    const std::int64_t w_off = detail::signed_offset(w.bits);
    DenseMatrix y(xq.rows, layer.out_features);

    for (std::size_t t0 = 0; t0 < xq.rows; t0 += t_tile)
        for (std::size_t o0 = 0; o0 < layer.out_features; o0 += o_tile)
            for (std::size_t t = t0; t < std::min(xq.rows, t0 + t_tile); ++t) {
                const std::size_t o_end = std::min<std::size_t>(layer.out_features, o0 + o_tile);
                // Operands per output row; pack2 pairs rows o and o + 1 at the same slot.
                std::vector<detail::RowOperands> rows;
                for (std::size_t o = o0; o < o_end; ++o) rows.push_back(detail::gather(xq, layer, t, o));
                std::vector<std::vector<std::int64_t>> prod(rows.size(), std::vector<std::int64_t>(w.cols, 0));
                auto wq = [&](std::size_t o, std::size_t p) { return static_cast<std::int64_t>(w.code(o, p)) - w_off; };
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    const std::size_t o = o0 + i;
                    for (std::size_t p = 0; p < w.cols; ++p) {
                        if (!pmode) {
                            prod[i][p] = rows[i].x[p] * wq(o, p);
                        } else if (lay.packs_activations()) {
                            if (p % 2 == 1) continue;
                            const bool pair = p + 1 < w.cols;
                            const auto [p1, p2] = dsp_mul_pack4(wq(o, p), pair ? wq(o, p + 1) : 0, rows[i].x[p],
                                                                pair ? rows[i].x[p + 1] : 0, lay);
                            prod[i][p] = p1;
                            if (pair) prod[i][p + 1] = p2;
                        } else if (layer.sparse()) {
                            // Rows select different inputs, so each packed product shares its
                            // activation with a zero weight in the upper lane.
                            prod[i][p] = dsp_mul_pack2(wq(o, p), 0, rows[i].x[p], lay).first;
                        } else {
                            if (i % 2 == 1) continue;
                            const bool pair = i + 1 < rows.size();
                            const auto [p1, p2] = dsp_mul_pack2(wq(o, p), pair ? wq(o + 1, p) : 0, rows[i].x[p], lay);
                            prod[i][p] = p1;
                            if (pair) prod[i + 1][p] = p2;
                        }
                    }
                }
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    const std::size_t o = o0 + i;
                    std::vector<std::int64_t> acc(w.groups_per_row(), 0);
                    for (std::size_t p = 0; p < w.cols; ++p) {
                        if (!rows[i].real[p]) continue;
                        const std::int64_t b = w_off - w.zero(o, p);
                        const std::int64_t a = rows[i].a[p];
                        acc[p / w.group_size] += prod[i][p] + b * rows[i].x[p] + a * wq(o, p) + a * b;
                    }
                    y(t, o) = compress::rescale_groups(acc, xq, w, t, o);
                }
            }
    if (layer.lora) y = y + compress::lora_forward(xq, *layer.lora, layer.act_bits);

    RceResult res;
    res.compute_cycles = rce_cycles(op, mode, layer.sparse(), pack_factor(pmode), cfg);
    if (layer.lora) {
        const auto r = static_cast<std::int64_t>(layer.lora->rank());
        const std::int64_t lp = pack_factor(pack_mode_for(8, packing));
        res.compute_cycles += rce_cycles({op.tokens, op.in, r}, mode, false, lp, cfg) +
                              rce_cycles({op.tokens, r, op.out}, mode, false, lp, cfg);
    }
    res.output = std::move(y);
    return res;
}

}  // namespace accllm::sim
