// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "accllm/attention/fused.hpp"
#include "accllm/attention/kv_cache.hpp"
#include "accllm/compress/compressed_linear.hpp"
#include "accllm/compress/quantize.hpp"
#include "accllm/core/matrix.hpp"
#include "accllm/core/model.hpp"
#include "accllm/core/reference.hpp"

namespace accllm::compress {

/// The six compressed matrices of one decoder layer, output-major.
struct CompressedLayer {
    CompressedLinear wq, wk, wv, wo, wa, wb;
};

struct ModelCompressStats {
    double weight_error = 0.0;          // sum over matrices, with LoRA
    double weight_error_no_lora = 0.0;  // sum over matrices, compressed base only
};

/// Compresses every matrix of a float model. Calibration inputs of each
/// matrix come from the float forward pass over `calib` (n x d).
inline std::vector<CompressedLayer> compress_model(const std::vector<LayerWeights>& layers, const ModelDims& dims,
                                                   const DenseMatrix& calib, const CompressConfig& cfg,
                                                   ModelCompressStats* stats = nullptr) {
    dims.validate();
    require(calib.cols() == static_cast<std::size_t>(dims.d), "compress_model: calibration must be n x d");
    const AttentionMask mask = AttentionMask::causal(calib.rows());
    ModelCompressStats total;
    auto one = [&](const DenseMatrix& w_in_out, const DenseMatrix& x) {
        CompressStats st;
        auto c = compress_linear(transpose(w_in_out), x, cfg, &st);
        total.weight_error += st.weight_error;
        total.weight_error_no_lora += st.weight_error_no_lora;
        return c;
    };
    std::vector<CompressedLayer> out;
    DenseMatrix h = calib;
    for (const auto& w : layers) {
        CompressedLayer c;
        c.wq = one(w.wq, h);
        c.wk = one(w.wk, h);
        c.wv = one(w.wv, h);
        const DenseMatrix attn = multi_head_attention(matmul(h, w.wq), matmul(h, w.wk), matmul(h, w.wv), dims, mask);
        c.wo = one(w.wo, attn);
        const DenseMatrix o = matmul(attn, w.wo);
        c.wa = one(w.wa, o);
        DenseMatrix hidden = matmul(o, w.wa);
        for (double& e : hidden.data()) e = silu(e);
        c.wb = one(w.wb, hidden);
        h = matmul(hidden, w.wb);
        out.push_back(std::move(c));
    }
    if (stats) *stats = total;
    return out;
}

struct PipelineOptions {
    int act_bits = 8;
    int kv_bits = 4;
    std::size_t n_sink = attn::kDefaultSinks;
    std::size_t window = attn::kDefaultWindow;
    std::size_t chunk = 16;
};

/// Forward pass of the compressed model: per-token activation quantization
/// before every matrix, integer linear layers, and attention through a
/// Lambda-shaped low-bit KV cache.
inline DenseMatrix compressed_forward(const DenseMatrix& x, const std::vector<CompressedLayer>& layers,
                                      const ModelDims& dims, const PipelineOptions& opt = {}) {
    dims.validate();
    require(x.cols() == static_cast<std::size_t>(dims.d), "compressed_forward: x must be l x d");
    auto lin = [&](const DenseMatrix& in, const CompressedLinear& w) {
        return compressed_linear_forward(quant_per_token_act(in, opt.act_bits), w);
    };
    DenseMatrix h = x;
    for (const auto& c : layers) {
        attn::LambdaKvCache cache(static_cast<std::size_t>(dims.h), static_cast<std::size_t>(dims.d_k), opt.n_sink,
                                  opt.window, opt.kv_bits);
        const DenseMatrix a =
            attn::cached_prefill_attention(lin(h, c.wq), lin(h, c.wk), lin(h, c.wv), cache, opt.chunk, opt.act_bits);
        const DenseMatrix o = lin(a, c.wo);
        DenseMatrix hidden = lin(o, c.wa);
        for (double& e : hidden.data()) e = silu(e);
        h = lin(hidden, c.wb);
    }
    return h;
}

}  // namespace accllm::compress
