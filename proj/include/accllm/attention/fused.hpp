// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "accllm/attention/kv_cache.hpp"
#include "accllm/attention/lambda_mask.hpp"
#include "accllm/compress/quantize.hpp"
#include "accllm/core/common.hpp"
#include "accllm/core/matrix.hpp"
#include "accllm/core/model.hpp"
#include "accllm/core/quant_tensor.hpp"
#include "accllm/core/reference.hpp"

namespace accllm::attn {

/// Running state of the streamed softmax: sum_j exp(s_j) v_j and sum_j exp(s_j),
/// both held relative to 2^max_exp. exp(s) is split as 2^n * 2^f with integer n,
/// so renormalizing when the running maximum moves is an exact power-of-two
/// scaling and the result does not depend on how keys are chunked.
struct FusedAttnState {
    std::vector<double> weighted_sum;
    double denominator = 0.0;
    std::int64_t max_exp = std::numeric_limits<std::int64_t>::min();
    std::size_t keys_seen = 0;

    explicit FusedAttnState(std::size_t d_k) : weighted_sum(d_k, 0.0) {}

    /// Stages 2-5 for one chunk of scores and their value rows.
    template <typename ValueFn>
    void absorb(std::span<const double> scores, ValueFn&& value) {
        if (scores.empty()) return;
        // Stage 2: split exponents, find the chunk maximum.
        std::vector<std::int64_t> ex(scores.size());
        std::vector<double> mant(scores.size());
        std::int64_t chunk_max = std::numeric_limits<std::int64_t>::min();
        for (std::size_t j = 0; j < scores.size(); ++j) {
            const double t = scores[j] * std::numbers::log2e;
            const double n = std::floor(t);
            ex[j] = static_cast<std::int64_t>(n);
            mant[j] = std::exp2(t - n);
            chunk_max = std::max(chunk_max, ex[j]);
        }
        if (chunk_max > max_exp) {
            if (keys_seen > 0) {
                const int shift = static_cast<int>(std::max<std::int64_t>(max_exp - chunk_max, -2000));
                denominator = std::ldexp(denominator, shift);
                for (double& a : weighted_sum) a = std::ldexp(a, shift);
            }
            max_exp = chunk_max;
        }
        // Stage 3: running denominator.
        std::vector<double> p(scores.size());
        for (std::size_t j = 0; j < scores.size(); ++j) {
            p[j] = std::ldexp(mant[j], static_cast<int>(std::max<std::int64_t>(ex[j] - max_exp, -2000)));
            denominator += p[j];
        }
        // Stages 4-5: exp-weighted value accumulation.
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (p[j] == 0.0) continue;
            for (std::size_t c = 0; c < weighted_sum.size(); ++c) weighted_sum[c] += p[j] * value(j, c);
        }
        keys_seen += scores.size();
    }

    std::vector<double> finish() const {
        if (keys_seen == 0 || !(denominator > 0.0)) throw Error("fused attention: no visible key");
        std::vector<double> out(weighted_sum.size());
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = weighted_sum[c] / denominator;
        return out;
    }
};

/// Float key/value source for one head: q is d_k wide, keys and values are the
/// head's slices of full-width K and V.
struct FloatHeadSource {
    std::span<const double> q;
    const DenseMatrix* keys;
    const DenseMatrix* values;
    std::size_t offset;

    std::size_t d_k() const { return q.size(); }
    double score(std::size_t j) const {
        double dot = 0.0;
        for (std::size_t c = 0; c < q.size(); ++c) dot += q[c] * (*keys)(j, offset + c);
        return dot / std::sqrt(static_cast<double>(q.size()));
    }
    double value(std::size_t j, std::size_t c) const { return (*values)(j, offset + c); }
};

/// Integer source: A8 query codes of one token against the 4-bit cache.
/// Stage 1 is an integer dot product rescaled by s_q * s_k / sqrt(d_k).
struct CacheHeadSource {
    const QuantTensor* q;  // 1 x (h * d_k), per-token asymmetric
    std::size_t q_row;
    const LambdaKvCache* cache;
    std::size_t head;

    std::size_t d_k() const { return cache->d_k(); }
    double score(std::size_t j) const {
        const auto kc = cache->k_codes(j, head);
        const std::size_t off = head * cache->d_k();
        const std::int64_t zq = q->zero(q_row, off);
        std::int64_t acc = 0;
        for (std::size_t c = 0; c < kc.size(); ++c) acc += (q->code(q_row, off + c) - zq) * static_cast<std::int64_t>(kc[c]);
        return q->scales[q_row] * cache->k_scale(j, head) * static_cast<double>(acc) /
               std::sqrt(static_cast<double>(kc.size()));
    }
    double value(std::size_t j, std::size_t c) const {
        return cache->v_scale(j, head) * static_cast<double>(cache->v_codes(j, head)[c]);
    }
};

/// Streams the keys listed in `visible` through the fused pipeline, `chunk`
/// keys per stage pass.
template <typename Source>
std::vector<double> fused_attention(const Source& src, std::span<const std::size_t> visible, std::size_t chunk) {
    if (chunk == 0) throw ConfigError("fused attention: chunk must be >= 1");
    if (visible.empty()) throw Error("fused attention: no visible key");
    FusedAttnState st(src.d_k());
    std::vector<double> scores;
    for (std::size_t start = 0; start < visible.size(); start += chunk) {
        const std::size_t n = std::min(chunk, visible.size() - start);
        scores.resize(n);
        for (std::size_t j = 0; j < n; ++j) scores[j] = src.score(visible[start + j]);  // stage 1
        st.absorb(scores, [&](std::size_t j, std::size_t c) { return src.value(visible[start + j], c); });
    }
    return st.finish();
}

inline std::vector<std::size_t> all_keys(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

/// One head of one query row over every token currently in the cache.
inline std::vector<double> fused_attention_row(const QuantTensor& q, std::size_t q_row, const LambdaKvCache& cache,
                                               std::size_t head, std::size_t chunk) {
    require(q.cols == cache.width(), "fused_attention_row: query width must be h * d_k");
    require(q.scheme == QuantScheme::per_token_asymmetric, "fused_attention_row: query must be per-token A8");
    if (cache.empty()) throw Error("fused attention: empty cache");
    const auto keys = all_keys(cache.size());
    return fused_attention(CacheHeadSource{&q, q_row, &cache, head}, keys, chunk);
}

/// Float variant over explicit K/V tiles for one head.
inline std::vector<double> fused_attention_row(std::span<const double> q_head, const DenseMatrix& k,
                                               const DenseMatrix& v, std::size_t head_offset,
                                               std::span<const std::size_t> visible, std::size_t chunk) {
    return fused_attention(FloatHeadSource{q_head, &k, &v, head_offset}, visible, chunk);
}

/// Decode attention for one token: quantizes the query row to `act_bits` and
/// attends every cached token, all heads. Returns 1 x (h * d_k).
inline DenseMatrix decode_step(std::span<const double> q_row, const LambdaKvCache& cache, std::size_t chunk = 16,
                               int act_bits = 8) {
    if (cache.empty()) throw Error("decode_step: empty cache");
    require(q_row.size() == cache.width(), "decode_step: query width must be h * d_k");
    const QuantTensor q =
        compress::quant_per_token_act(DenseMatrix(1, q_row.size(), std::vector<double>(q_row.begin(), q_row.end())), act_bits);
    DenseMatrix out(1, cache.width());
    for (std::size_t h = 0; h < cache.heads(); ++h) {
        const auto row = fused_attention_row(q, 0, cache, h, chunk);
        std::copy(row.begin(), row.end(), out.row(0).begin() + static_cast<std::ptrdiff_t>(h * cache.d_k()));
    }
    return out;
}

/// Fused multi-head attention over a full sequence under `mask`, in float.
/// Keys are streamed in chunks; the output matches multi_head_attention.
inline DenseMatrix fused_multi_head_attention(const DenseMatrix& q, const DenseMatrix& k, const DenseMatrix& v,
                                              const ModelDims& dims, const AttentionMask& mask, std::size_t chunk) {
    const std::size_t l = q.rows();
    require(k.rows() == l && v.rows() == l && mask.size() == l, "fused attention: sequence lengths differ");
    const auto dk = static_cast<std::size_t>(dims.d_k);
    DenseMatrix out(l, q.cols());
    for (std::size_t head = 0; head < static_cast<std::size_t>(dims.h); ++head) {
        const std::size_t off = head * dk;
        for (std::size_t i = 0; i < l; ++i) {
            const auto keys = mask.visible(i);
            const auto row = fused_attention_row(q.row(i).subspan(off, dk), k, v, off, keys, chunk);
            std::copy(row.begin(), row.end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
        }
    }
    return out;
}

/// Prefill through a Lambda cache: every token is appended and then attends
/// the cache contents, exactly as decode would. Q is quantized per token to
/// `act_bits`; K and V go through the cache's low-bit storage.
inline DenseMatrix cached_prefill_attention(const DenseMatrix& q, const DenseMatrix& k, const DenseMatrix& v,
                                            LambdaKvCache& cache, std::size_t chunk = 16, int act_bits = 8) {
    require(q.rows() == k.rows() && k.rows() == v.rows(), "cached prefill: sequence lengths differ");
    DenseMatrix out(q.rows(), q.cols());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        cache.append(k.row(i), v.row(i), static_cast<std::int64_t>(i));
        const auto row = decode_step(q.row(i), cache, chunk, act_bits);
        std::copy(row.data().begin(), row.data().end(), out.row(i).begin());
    }
    return out;
}

}  // namespace accllm::attn
