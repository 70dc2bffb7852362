// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "accllm/compress/sparse24.hpp"
#include "accllm/core/common.hpp"
#include "accllm/core/matrix.hpp"
#include "accllm/core/quant_tensor.hpp"

namespace accllm::compress {

/// Scale and zero point of one asymmetric group.
struct AsymParams {
    double scale = kScaleFloor;
    std::int32_t zero = 0;
};

/// S = (max - min) / (2^b - 1), Z = clip(round(-min / S), 0, 2^b - 1).
/// The range is widened to include zero so Z never saturates and every
/// in-range value is within S/2 of its reconstruction. An all-zero range
/// gets the floor scale and Z = 0.
inline AsymParams asym_params(double lo, double hi, int bits) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
    const double levels = static_cast<double>((1 << bits) - 1);
    if (hi == lo) return {kScaleFloor, 0};
    const double scale = std::max((hi - lo) / levels, kScaleFloor);
    const double z = std::clamp(round_half_away(-lo / scale), 0.0, levels);
    return {scale, static_cast<std::int32_t>(z)};
}

/// W_Q = clip(round(W / S) + Z, 0, 2^b - 1).
inline std::int32_t asym_code(double v, const AsymParams& p, int bits) {
    const double levels = static_cast<double>((1 << bits) - 1);
    return static_cast<std::int32_t>(std::clamp(round_half_away(v / p.scale) + p.zero, 0.0, levels));
}

inline double asym_dequant(std::int32_t code, const AsymParams& p) {
    return p.scale * static_cast<double>(code - p.zero);
}

/// Post-sigmoid clipping factors for one group.
struct LwcClip {
    double hi = 1.0;
    double lo = 1.0;
    bool operator==(const LwcClip&) const = default;
};

/// Clipping factors for every group of a matrix, row-major group order.
struct LwcParams {
    std::vector<double> clip_hi;
    std::vector<double> clip_lo;

    LwcClip at(std::size_t g) const { return {clip_hi[g], clip_lo[g]}; }
    void push(const LwcClip& c) {
        clip_hi.push_back(c.hi);
        clip_lo.push_back(c.lo);
    }
};

inline void check_clip(const LwcClip& c) {
    if (!(c.hi > 0.0 && c.hi <= 1.0 && c.lo > 0.0 && c.lo <= 1.0))
        throw ConfigError("LWC factors must lie in (0, 1]");
}

inline AsymParams group_params(std::span<const double> group, int bits, const LwcClip& clip) {
    if (group.empty()) throw Error("quantizer: empty group");
    const auto [mn, mx] = std::minmax_element(group.begin(), group.end());
    return asym_params(clip.lo * *mn, clip.hi * *mx, bits);
}

namespace detail {

inline QuantTensor make_asym(const DenseMatrix& w, int bits, std::size_t group_size, QuantScheme scheme,
                             const LwcParams* lwc) {
    if (bits != 2 && bits != 4 && bits != 8) throw ConfigError("quantizer: bits must be 2, 4 or 8");
    if (group_size == 0) throw ConfigError("quantizer: group size must be positive");
    if (w.cols() == 0) throw Error("quantizer: empty group");
    QuantTensor q;
    q.bits = bits;
    q.scheme = scheme;
    q.group_size = group_size;
    q.rows = w.rows();
    q.cols = w.cols();
    q.values.resize(w.size());
    const std::size_t gpr = q.groups_per_row();
    if (lwc && (lwc->clip_hi.size() != w.rows() * gpr || lwc->clip_lo.size() != w.rows() * gpr))
        throw DimensionError("quantizer: one LWC pair per group required");
    q.scales.reserve(w.rows() * gpr);
    q.zero_points.reserve(w.rows() * gpr);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t g = 0; g < gpr; ++g) {
            const std::size_t c0 = g * group_size;
            const std::size_t c1 = std::min(c0 + group_size, w.cols());
            const auto group = w.row(r).subspan(c0, c1 - c0);
            LwcClip clip;
            if (lwc) {
                clip = lwc->at(r * gpr + g);
                check_clip(clip);
            }
            const AsymParams p = group_params(group, bits, clip);
            for (std::size_t c = c0; c < c1; ++c) q.values[r * w.cols() + c] = asym_code(w(r, c), p, bits);
            q.scales.push_back(p.scale);
            q.zero_points.push_back(p.zero);
        }
    }
    return q;
}

}  // namespace detail

/// Group-wise asymmetric weight quantization along each output row.
inline QuantTensor quant_group_weights(const DenseMatrix& w, int bits = 2, std::size_t group_size = 64,
                                       const std::optional<LwcParams>& lwc = std::nullopt) {
    return detail::make_asym(w, bits, group_size, QuantScheme::group_asymmetric, lwc ? &*lwc : nullptr);
}

/// Quantizes the retained values of a 2:4 matrix; groups run over the packed
/// values of each row.
inline QuantTensor quant_group_weights(const SparseWeight24& w, int bits = 2, std::size_t group_size = 64,
                                       const std::optional<LwcParams>& lwc = std::nullopt) {
    return quant_group_weights(w.packed_values(), bits, group_size, lwc);
}

/// Flags elements that fall outside their group's clipped [lo*min, hi*max]
/// range; these are exempt from the half-step error bound.
inline std::vector<std::uint8_t> lwc_clipped_mask(const DenseMatrix& w, std::size_t group_size,
                                                  const LwcParams& lwc) {
    std::vector<std::uint8_t> mask(w.size(), 0);
    const std::size_t gpr = (w.cols() + group_size - 1) / group_size;
    for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t g = 0; g < gpr; ++g) {
            const std::size_t c0 = g * group_size;
            const std::size_t c1 = std::min(c0 + group_size, w.cols());
            const auto group = w.row(r).subspan(c0, c1 - c0);
            const auto [mn, mx] = std::minmax_element(group.begin(), group.end());
            const LwcClip clip = lwc.at(r * gpr + g);
            const double lo = clip.lo * *mn;
            const double hi = clip.hi * *mx;
            for (std::size_t c = c0; c < c1; ++c) mask[r * w.cols() + c] = (w(r, c) < lo || w(r, c) > hi) ? 1 : 0;
        }
    }
    return mask;
}

/// Search grid for the clipping factors.
struct LwcGrid {
    std::vector<double> hi_values;
    std::vector<double> lo_values;

    /// n x n points spread uniformly over [a, b]^2, endpoints included.
    static LwcGrid uniform(std::size_t n = 16, double a = 0.5, double b = 1.0) {
        LwcGrid g;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = n == 1 ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
            g.hi_values.push_back(v);
            g.lo_values.push_back(v);
        }
        return g;
    }
};

/// Mean squared dequantization error of one group under `clip`.
inline double group_quant_mse(std::span<const double> group, int bits, const LwcClip& clip) {
    const AsymParams p = group_params(group, bits, clip);
    double acc = 0.0;
    for (double v : group) {
        const double e = asym_dequant(asym_code(v, p, bits), p) - v;
        acc += e * e;
    }
    return acc / static_cast<double>(group.size());
}

/// Exhaustive grid search for the clipping pair with the lowest MSE. Ties go
/// to the larger hi factor, then the larger lo factor.
inline LwcClip fit_lwc(std::span<const double> group, int bits, const LwcGrid& grid = LwcGrid::uniform()) {
    if (grid.hi_values.empty() || grid.lo_values.empty()) throw ConfigError("fit_lwc: empty grid");
    auto hi_sorted = grid.hi_values;
    auto lo_sorted = grid.lo_values;
    std::sort(hi_sorted.rbegin(), hi_sorted.rend());
    std::sort(lo_sorted.rbegin(), lo_sorted.rend());
    LwcClip best{hi_sorted.front(), lo_sorted.front()};
    double best_mse = std::numeric_limits<double>::infinity();
    for (double hi : hi_sorted) {
        for (double lo : lo_sorted) {
            const LwcClip c{hi, lo};
            check_clip(c);
            const double mse = group_quant_mse(group, bits, c);
            if (mse < best_mse) {
                best_mse = mse;
                best = c;
            }
        }
    }
    return best;
}

/// Fits one clipping pair per group of `w`.
inline LwcParams fit_lwc_groups(const DenseMatrix& w, int bits, std::size_t group_size,
                                const LwcGrid& grid = LwcGrid::uniform()) {
    LwcParams out;
    const std::size_t gpr = (w.cols() + group_size - 1) / group_size;
    for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t g = 0; g < gpr; ++g) {
            const std::size_t c0 = g * group_size;
            const std::size_t c1 = std::min(c0 + group_size, w.cols());
            out.push(fit_lwc(w.row(r).subspan(c0, c1 - c0), bits, grid));
        }
    }
    return out;
}

/// Per-token asymmetric activation quantization (one scale per row).
inline QuantTensor quant_per_token_act(const DenseMatrix& x, int bits = 8) {
    return detail::make_asym(x, bits, x.cols(), QuantScheme::per_token_asymmetric, nullptr);
}

/// Symmetric K/V quantization: one scale per (token, head), scale = max|v| / qmax.
inline QuantTensor quant_kv(const DenseMatrix& kv, int bits, std::size_t heads) {
    if (bits != 4 && bits != 8) throw ConfigError("quant_kv: bits must be 4 or 8");
    if (heads == 0 || kv.cols() % heads != 0) throw DimensionError("quant_kv: width must split evenly into heads");
    QuantTensor q;
    q.bits = bits;
    q.scheme = QuantScheme::per_token_per_head_symmetric;
    q.group_size = kv.cols() / heads;
    q.rows = kv.rows();
    q.cols = kv.cols();
    q.values.resize(kv.size());
    const double qmax = static_cast<double>(q.qmax());
    for (std::size_t r = 0; r < kv.rows(); ++r) {
        for (std::size_t h = 0; h < heads; ++h) {
            const auto slice = kv.row(r).subspan(h * q.group_size, q.group_size);
            double peak = 0.0;
            for (double v : slice) peak = std::max(peak, std::abs(v));
            const double scale = peak > 0.0 ? std::max(peak / qmax, kScaleFloor) : kScaleFloor;
            for (std::size_t c = 0; c < q.group_size; ++c) {
                const double code = std::clamp(round_half_away(slice[c] / scale), -qmax, qmax);
                q.values[r * kv.cols() + h * q.group_size + c] = static_cast<std::int32_t>(code);
            }
            q.scales.push_back(scale);
        }
    }
    return q;
}

}  // namespace accllm::compress
