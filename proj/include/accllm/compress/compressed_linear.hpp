// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "accllm/compress/hessian.hpp"
#include "accllm/compress/lora.hpp"
#include "accllm/compress/prune.hpp"
#include "accllm/compress/quantize.hpp"
#include "accllm/compress/sparse24.hpp"
#include "accllm/core/common.hpp"
#include "accllm/core/matrix.hpp"
#include "accllm/core/quant_tensor.hpp"

namespace accllm::compress {

/// A quantized linear layer y = x W^T (+ x B A^T). Weights are output-major.
/// When `pattern` is set, `weight` holds only the retained 2:4 values
/// (d_out x in_padded/2); otherwise it is dense (d_out x in_padded).
struct CompressedLinear {
    std::size_t in_features = 0;
    std::size_t in_padded = 0;
    std::size_t out_features = 0;
    std::optional<SparsePattern24> pattern;
    QuantTensor weight;
    std::optional<QuantLoraPair> lora;
    int act_bits = 8;

    bool sparse() const { return pattern.has_value(); }

    /// Dense input column feeding packed weight slot `p` of output row `o`.
    std::size_t input_column(std::size_t o, std::size_t p) const { return pattern ? pattern->column_of(o, p) : p; }

    /// Dequantized main weight, d_out x in_padded.
    DenseMatrix dequant_weight() const {
        const DenseMatrix packed = weight.dequantize();
        if (!pattern) return packed;
        return SparseWeight24{*pattern, packed.data()}.expand();
    }

    /// Dequantized effective weight including the LoRA product, d_out x in_padded.
    DenseMatrix effective_weight() const {
        DenseMatrix w = dequant_weight();
        if (lora) w = w + lora->product();
        return w;
    }

    void validate() const {
        weight.validate();
        require(weight.rows == out_features, "CompressedLinear: weight rows must equal out_features");
        require(in_padded >= in_features, "CompressedLinear: padded width too small");
        if (pattern) {
            require(pattern->rows() == out_features && pattern->cols() == in_padded,
                    "CompressedLinear: sparse pattern shape mismatch");
            require(weight.cols == in_padded / 2, "CompressedLinear: group/sparse misalignment");
        } else {
            require(weight.cols == in_padded, "CompressedLinear: dense weight width mismatch");
        }
        if (lora) {
            lora->a.validate();
            lora->bt.validate();
            require(lora->a.rows == out_features && lora->bt.cols == in_padded && lora->a.cols == lora->bt.rows,
                    "CompressedLinear: LoRA shapes mismatch");
        }
    }
};

/// Signed activation code (code - zero point) of token `t`, input column `c`;
/// columns past the real input width are padding and read as zero.
inline std::int64_t act_term(const QuantTensor& x, std::size_t t, std::size_t c) {
    if (c >= x.cols) return 0;
    return static_cast<std::int64_t>(x.code(t, c)) - x.zero(t, c);
}

/// Integer partial sums of one (token, output) pair: one accumulator per weight
/// group. This is the quantity every hardware dataflow must reproduce.
inline std::vector<std::int64_t> group_accumulators(const QuantTensor& x, const CompressedLinear& layer, std::size_t t,
                                                    std::size_t o) {
    const QuantTensor& w = layer.weight;
    std::vector<std::int64_t> acc(w.groups_per_row(), 0);
    for (std::size_t p = 0; p < w.cols; ++p) {
        const std::int64_t wv = static_cast<std::int64_t>(w.code(o, p)) - w.zero(o, p);
        acc[p / w.group_size] += act_term(x, t, layer.input_column(o, p)) * wv;
    }
    return acc;
}

/// Applies scales to group accumulators in canonical group order.
inline double rescale_groups(const std::vector<std::int64_t>& acc, const QuantTensor& x, const QuantTensor& w,
                             std::size_t t, std::size_t o) {
    const double sx = x.scales[t];
    double y = 0.0;
    for (std::size_t g = 0; g < acc.size(); ++g) y += sx * w.scales[o * w.groups_per_row() + g] * static_cast<double>(acc[g]);
    return y;
}

/// LoRA branch: t = X B in integer arithmetic, re-quantized per token to the
/// activation precision, then t A^T. Shares the main path's activation codes.
inline DenseMatrix lora_forward(const QuantTensor& x, const QuantLoraPair& lora, int act_bits) {
    const std::size_t r = lora.rank();
    DenseMatrix tmp(x.rows, r);
    for (std::size_t t = 0; t < x.rows; ++t) {
        for (std::size_t k = 0; k < r; ++k) {
            std::int64_t acc = 0;
            for (std::size_t c = 0; c < lora.bt.cols; ++c)
                acc += act_term(x, t, c) * (static_cast<std::int64_t>(lora.bt.code(k, c)) - lora.bt.zero(k, c));
            tmp(t, k) = x.scales[t] * lora.bt.scales[k] * static_cast<double>(acc);
        }
    }
    const QuantTensor tq = quant_per_token_act(tmp, act_bits);
    DenseMatrix out(x.rows, lora.a.rows);
    for (std::size_t t = 0; t < x.rows; ++t) {
        for (std::size_t o = 0; o < lora.a.rows; ++o) {
            std::int64_t acc = 0;
            for (std::size_t k = 0; k < r; ++k)
                acc += (static_cast<std::int64_t>(tq.code(t, k)) - tq.zero(t, k)) *
                       (static_cast<std::int64_t>(lora.a.code(o, k)) - lora.a.zero(o, k));
            out(t, o) = tq.scales[t] * lora.a.scales[o] * static_cast<double>(acc);
        }
    }
    return out;
}

/// Integer-arithmetic forward pass: per-group accumulators rescaled in double,
/// pruned positions skipped through the sparse indices, plus the LoRA branch.
inline DenseMatrix compressed_linear_forward(const QuantTensor& x, const CompressedLinear& layer) {
    layer.validate();
    require(x.cols == layer.in_features, "compressed_linear_forward: input width mismatch");
    require(x.scheme == QuantScheme::per_token_asymmetric, "compressed_linear_forward: activations must be per-token");
    DenseMatrix y(x.rows, layer.out_features);
    for (std::size_t t = 0; t < x.rows; ++t)
        for (std::size_t o = 0; o < layer.out_features; ++o)
            y(t, o) = rescale_groups(group_accumulators(x, layer, t, o), x, layer.weight, t, o);
    if (layer.lora) y = y + lora_forward(x, *layer.lora, layer.act_bits);
    return y;
}

/// Compression pipeline settings.
struct CompressConfig {
    bool prune = true;
    int weight_bits = 2;
    std::size_t group_size = 64;
    int act_bits = 8;
    std::size_t lora_rank = kDefaultLoraRank;  // 0 disables LoRA
    int lora_bits = 8;
    bool lora_weighted = false;
    double damp_fraction = kDefaultDampFraction;
    bool lwc = true;
    std::size_t lwc_grid = 16;
    double lwc_lo = 0.5;
    double lwc_hi = 1.0;

    void validate() const {
        if (weight_bits != 2 && weight_bits != 4 && weight_bits != 8) throw ConfigError("weight_bits must be 2, 4 or 8");
        if (act_bits != 4 && act_bits != 8) throw ConfigError("act_bits must be 4 or 8");
        if (lora_bits != 8) throw ConfigError("lora_bits must be 8");
        if (group_size == 0) throw ConfigError("group_size must be positive");
        if (!(damp_fraction >= 0.0)) throw ConfigError("damp_fraction must be >= 0");
        if (lwc && (lwc_grid == 0 || !(lwc_lo > 0.0 && lwc_lo <= lwc_hi && lwc_hi <= 1.0)))
            throw ConfigError("lwc grid must be non-empty within (0, 1]");
    }
};

inline void to_json(nlohmann::json& j, const CompressConfig& c) {
    j = nlohmann::json{{"prune", c.prune},
                       {"weight_bits", c.weight_bits},
                       {"group_size", c.group_size},
                       {"act_bits", c.act_bits},
                       {"lora_rank", c.lora_rank},
                       {"lora_bits", c.lora_bits},
                       {"lora_weighted", c.lora_weighted},
                       {"damp_fraction", c.damp_fraction},
                       {"lwc", {{"enabled", c.lwc}, {"grid", c.lwc_grid}, {"lo", c.lwc_lo}, {"hi", c.lwc_hi}}}};
}

inline void from_json(const nlohmann::json& j, CompressConfig& c) {
    c = CompressConfig{};
    if (!j.is_object()) throw ConfigError("compression config must be a JSON object");
    c.prune = j.value("prune", c.prune);
    c.weight_bits = j.value("weight_bits", c.weight_bits);
    c.group_size = j.value("group_size", c.group_size);
    c.act_bits = j.value("act_bits", c.act_bits);
    c.lora_rank = j.value("lora_rank", c.lora_rank);
    c.lora_bits = j.value("lora_bits", c.lora_bits);
    c.lora_weighted = j.value("lora_weighted", c.lora_weighted);
    c.damp_fraction = j.value("damp_fraction", c.damp_fraction);
    if (j.contains("lwc")) {
        const auto& l = j.at("lwc");
        c.lwc = l.value("enabled", c.lwc);
        c.lwc_grid = l.value("grid", c.lwc_grid);
        c.lwc_lo = l.value("lo", c.lwc_lo);
        c.lwc_hi = l.value("hi", c.lwc_hi);
    }
    c.validate();
}

/// Diagnostics from compressing one layer.
struct CompressStats {
    double prune_error = 0.0;          // Hessian-weighted pruning error
    double weight_error_no_lora = 0.0; // ||W - W'_Q||_F^2
    double weight_error = 0.0;         // ||W - (W'_Q + A B^T)||_F^2, 8-bit LoRA
};

/// Prune (optional), quantize and LoRA-compensate an output-major weight.
/// `calib` is n x d_in and drives the Hessian and the weighted LoRA variant.
inline CompressedLinear compress_linear(const DenseMatrix& w, const DenseMatrix& calib, const CompressConfig& cfg,
                                        CompressStats* stats = nullptr) {
    cfg.validate();
    require(calib.cols() == w.cols(), "compress_linear: calibration width must equal d_in");
    CompressedLinear layer;
    layer.in_features = w.cols();
    layer.out_features = w.rows();
    layer.act_bits = cfg.act_bits;
    const DenseMatrix padded = pad_cols(w, kBlock);
    layer.in_padded = padded.cols();

    HessianState hess;
    const bool need_hessian = cfg.prune || (cfg.lora_rank > 0 && cfg.lora_weighted);
    if (need_hessian) hess = pad_hessian(build_hessian(calib, cfg.damp_fraction), padded.cols());

    DenseMatrix values = padded;
    CompressStats st;
    if (cfg.prune) {
        PruneResult pr = prune_2_4(padded, hess);
        st.prune_error = pr.reconstruction_error;
        values = pr.weight.packed_values();
        layer.pattern = std::move(pr.weight.pattern);
    }
    std::optional<LwcParams> lwc;
    if (cfg.lwc) lwc = fit_lwc_groups(values, cfg.weight_bits, cfg.group_size, LwcGrid::uniform(cfg.lwc_grid, cfg.lwc_lo, cfg.lwc_hi));
    layer.weight = quant_group_weights(values, cfg.weight_bits, cfg.group_size, lwc);

    const DenseMatrix wq = layer.dequant_weight();
    st.weight_error_no_lora = frobenius_sq(padded - wq);
    st.weight_error = st.weight_error_no_lora;
    if (cfg.lora_rank > 0) {
        const std::size_t r = std::min(cfg.lora_rank, std::min(padded.rows(), padded.cols()));
        const LoraPair pair = cfg.lora_weighted ? lora_init_weighted(padded, wq, r, hess.h) : lora_init(padded, wq, r);
        layer.lora = lora_quantize(pair, cfg.lora_bits);
        st.weight_error = frobenius_sq(padded - layer.effective_weight());
    }
    if (stats) *stats = st;
    return layer;
}

}  // namespace accllm::compress
