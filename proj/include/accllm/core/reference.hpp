// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "accllm/core/matrix.hpp"
#include "accllm/core/model.hpp"

namespace accllm {

/// Square boolean mask: allowed(i, j) means query i may attend key j.
class AttentionMask {
public:
    AttentionMask() = default;
    explicit AttentionMask(std::size_t n, bool fill = false) : n_(n), bits_(n * n, fill ? 1 : 0) {}

    static AttentionMask causal(std::size_t n) {
        AttentionMask m(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
        return m;
    }

    std::size_t size() const { return n_; }
    bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { bits_[i * n_ + j] = v ? 1 : 0; }

    std::vector<std::size_t> visible(std::size_t i) const {
        std::vector<std::size_t> keys;
        for (std::size_t j = 0; j < n_; ++j)
            if ((*this)(i, j)) keys.push_back(j);
        return keys;
    }

    bool operator==(const AttentionMask&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> bits_;
};

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }

/// Numerically stable softmax over the entries of `logits` whose `keep` flag is
/// set; masked entries get probability zero.
inline std::vector<double> masked_softmax(std::span<const double> logits, std::span<const bool> keep) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.size(); ++j)
        if (keep[j]) peak = std::max(peak, logits[j]);
    std::vector<double> p(logits.size(), 0.0);
    double denom = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (!keep[j]) continue;
        p[j] = std::exp(logits[j] - peak);
        denom += p[j];
    }
    require(denom > 0.0, "masked_softmax: no visible key");
    for (double& v : p) v /= denom;
    return p;
}

/// Multi-head scaled dot-product attention on already-projected Q, K, V
/// (each l x d). Returns concat(A_1..A_h), l x d. `probs_out`, when given,
/// receives the softmax rows per head (h blocks of l x l).
inline DenseMatrix multi_head_attention(const DenseMatrix& q, const DenseMatrix& k, const DenseMatrix& v,
                                        const ModelDims& dims, const AttentionMask& mask,
                                        std::vector<DenseMatrix>* probs_out = nullptr) {
    const std::size_t l = q.rows();
    const auto dk = static_cast<std::size_t>(dims.d_k);
    require(k.rows() == l && v.rows() == l && mask.size() == l, "attention: sequence lengths differ");
    require(q.cols() == static_cast<std::size_t>(dims.d), "attention: Q width must be d");
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dims.d_k));
    DenseMatrix out(l, q.cols());
    if (probs_out) probs_out->assign(static_cast<std::size_t>(dims.h), DenseMatrix(l, l));
    std::vector<double> logits(l);
    auto keep = std::make_unique<bool[]>(l);
    for (std::size_t head = 0; head < static_cast<std::size_t>(dims.h); ++head) {
        const std::size_t off = head * dk;
        for (std::size_t i = 0; i < l; ++i) {
            for (std::size_t j = 0; j < l; ++j) {
                keep[j] = mask(i, j);
                double dot = 0.0;
                for (std::size_t c = 0; c < dk; ++c) dot += q(i, off + c) * k(j, off + c);
                logits[j] = dot * inv_sqrt_dk;
            }
            const auto p = masked_softmax(logits, std::span<const bool>(keep.get(), l));
            for (std::size_t j = 0; j < l; ++j) {
                if (p[j] == 0.0) continue;
                for (std::size_t c = 0; c < dk; ++c) out(i, off + c) += p[j] * v(j, off + c);
            }
            if (probs_out)
                std::copy(p.begin(), p.end(), (*probs_out)[head].row(i).begin());
        }
    }
    return out;
}

/// One decoder layer: MHA followed by the two-matrix SiLU FFN.
inline DenseMatrix reference_layer(const DenseMatrix& x, const LayerWeights& w, const ModelDims& dims,
                                   const AttentionMask& mask) {
    const DenseMatrix q = matmul(x, w.wq);
    const DenseMatrix k = matmul(x, w.wk);
    const DenseMatrix v = matmul(x, w.wv);
    const DenseMatrix attn = multi_head_attention(q, k, v, dims, mask);
    const DenseMatrix o_mha = matmul(attn, w.wo);
    DenseMatrix hidden = matmul(o_mha, w.wa);
    for (double& e : hidden.data()) e = silu(e);
    return matmul(hidden, w.wb);
}

/// Float64 forward pass through every layer; the oracle for all compressed
/// and fused paths.
inline DenseMatrix reference_forward(const DenseMatrix& x, const std::vector<LayerWeights>& layers,
                                     const ModelDims& dims, const AttentionMask& mask) {
    dims.validate();
    require(x.cols() == static_cast<std::size_t>(dims.d), "reference_forward: x must be l x d");
    require(mask.size() == x.rows(), "reference_forward: mask must be l x l");
    require(layers.size() == static_cast<std::size_t>(dims.n_layers), "reference_forward: layer count");
    DenseMatrix h = x;
    for (const auto& w : layers) h = reference_layer(h, w, dims, mask);
    return h;
}

}  // namespace accllm
