// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "accllm/core/common.hpp"

namespace accllm::sim {

enum class PackMode { pack2_w8, pack2_w4q8, pack4_w2a8 };

inline constexpr std::string_view to_string(PackMode m) {
    switch (m) {
        case PackMode::pack2_w8: return "pack2_w8";
        case PackMode::pack2_w4q8: return "pack2_w4q8";
        case PackMode::pack4_w2a8: return "pack4_w2a8";
    }
    return "?";
}

inline PackMode pack_mode_from(std::string_view s) {
    for (auto m : {PackMode::pack2_w8, PackMode::pack2_w4q8, PackMode::pack4_w2a8})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown DSP pack mode: " + std::string(s));
}

/// Port widths of the DSP48E2 multiplier.
inline constexpr int kPortABits = 27;
inline constexpr int kPortBBits = 18;
inline constexpr int kProductBits = 45;

struct OperandRange {
    std::int64_t lo, hi;
};

/// Signed weight range per mode; activations are always signed 8-bit.
inline constexpr OperandRange weight_range(PackMode m) {
    switch (m) {
        case PackMode::pack2_w8: return {-128, 127};
        case PackMode::pack2_w4q8: return {-8, 7};
        case PackMode::pack4_w2a8: return {-2, 1};
    }
    return {0, 0};
}
inline constexpr OperandRange kActRange{-128, 127};

/// Bit placement of the packed operands. Every partial product sits in a
/// `field_width`-bit field decoded as a value in [field_lo, field_lo + 2^w - 1];
/// the remainder above a field is (P - field) >> shift, which is the usual
/// "add one to the upper field when the lower one is negative" correction.
///
/// pack2: P = (w1 + w2 * 2^shift_w2) * x, fields at bit 0 and shift_w2.
/// pack4: P = (w1 + w2 * 2^shift_w2) * (x1 + x2 * 2^shift_x2), fields at bits
///        0 (x1 w1), shift_x2 (x2 w1), shift_w2 (x1 w2), shift_w2 + shift_x2 (x2 w2).
struct DspPackLayout {
    PackMode mode = PackMode::pack2_w8;
    int shift_w2 = 16;
    int shift_x2 = 0;
    int field_width = 16;
    std::int64_t field_lo = -32768;

    bool packs_activations() const { return mode == PackMode::pack4_w2a8; }

    /// Unused headroom of a field over the widest partial product it holds.
    int guard_bits() const {
        const auto w = weight_range(mode);
        const std::int64_t pmin = std::min(w.lo * kActRange.hi, w.hi * kActRange.lo);
        const std::int64_t pmax = std::max(w.lo * kActRange.lo, w.hi * kActRange.hi);
        int need = 0;
        while ((std::int64_t{1} << need) < pmax - pmin + 1) ++need;
        return field_width - need;
    }

    /// Structural checks: fields do not overlap and every operand and product
    /// fits its port. Value-range adequacy is left to the exhaustive sweep.
    void validate() const {
        if (field_width < 1 || field_width > 30) throw ConfigError("dsp layout: field_width out of range");
        if (!(field_lo <= 0 && field_lo > -(std::int64_t{1} << field_width)))
            throw ConfigError("dsp layout: field_lo must lie in (-2^w, 0]");
        if (shift_w2 < field_width) throw ConfigError("dsp layout: weight fields overlap");
        const auto w = weight_range(mode);
        const std::int64_t wmax = std::max(-w.lo, w.hi);
        const std::int64_t a_port = wmax + wmax * (std::int64_t{1} << shift_w2);
        std::int64_t b_port = 128;
        if (packs_activations()) {
            if (shift_x2 < field_width || shift_w2 - shift_x2 < field_width)
                throw ConfigError("dsp layout: partial-product fields overlap");
            b_port = 128 + 128 * (std::int64_t{1} << shift_x2);
        } else if (shift_x2 != 0) {
            throw ConfigError("dsp layout: pack2 modes take a single activation (shift_x2 = 0)");
        }
        if (a_port >= (std::int64_t{1} << (kPortABits - 1))) throw ConfigError("dsp layout: weight port overflow");
        if (b_port >= (std::int64_t{1} << (kPortBBits - 1))) throw ConfigError("dsp layout: activation port overflow");
        if (a_port > (std::int64_t{1} << (kProductBits - 1)) / b_port)
            throw ConfigError("dsp layout: fields exceed the 45-bit product");
    }

    /// Canonical parameter string; its crc32 identifies a verified layout.
    std::string canonical() const {
        return std::string(to_string(mode)) + ";shift_w2=" + std::to_string(shift_w2) + ";shift_x2=" +
               std::to_string(shift_x2) + ";field_width=" + std::to_string(field_width) +
               ";field_lo=" + std::to_string(field_lo);
    }
    std::uint32_t hash() const {
        const std::string s = canonical();
        return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
    }

    bool operator==(const DspPackLayout&) const = default;
};

/// Shipped layouts; each passes the exhaustive sweep.
inline DspPackLayout default_layout(PackMode m) {
    switch (m) {
        case PackMode::pack2_w8: return {PackMode::pack2_w8, 16, 0, 16, -32768};
        case PackMode::pack2_w4q8: return {PackMode::pack2_w4q8, 16, 0, 16, -32768};
        case PackMode::pack4_w2a8: return {PackMode::pack4_w2a8, 18, 9, 9, -255};
    }
    return {};
}

namespace detail {

/// Splits the lowest field off `p`: returns (field value, remainder above it).
inline std::pair<std::int64_t, std::int64_t> take_field(std::int64_t p, const DspPackLayout& lay, int shift) {
    const std::int64_t span = std::int64_t{1} << lay.field_width;
    std::int64_t v = p & (span - 1);
    if (v > lay.field_lo + span - 1) v -= span;
    return {v, (p - v) >> shift};
}

inline void check_range(std::int64_t v, OperandRange r, const char* what) {
    if (v < r.lo || v > r.hi) throw ConfigError(std::string("dsp: ") + what + " outside the declared bit range");
}

}  // namespace detail

/// Two products x*w1, x*w2 from one wide multiplication.
inline std::pair<std::int64_t, std::int64_t> dsp_mul_pack2(std::int64_t w1, std::int64_t w2, std::int64_t x,
                                                           const DspPackLayout& lay) {
    const auto wr = weight_range(lay.mode);
    detail::check_range(w1, wr, "w1");
    detail::check_range(w2, wr, "w2");
    detail::check_range(x, kActRange, "x");
    const std::int64_t port_a = w1 + w2 * (std::int64_t{1} << lay.shift_w2);
    const std::int64_t p = port_a * x;
    const auto [p1, rest] = detail::take_field(p, lay, lay.shift_w2);
    return {p1, rest};
}

/// Diagonal products x1*w1, x2*w2 of (w1 + w2 2^sw)(x1 + x2 2^sx); the two
/// cross terms are decoded to keep the carries right and then dropped.
inline std::pair<std::int64_t, std::int64_t> dsp_mul_pack4(std::int64_t w1, std::int64_t w2, std::int64_t x1,
                                                           std::int64_t x2, const DspPackLayout& lay) {
    const auto wr = weight_range(lay.mode);
    detail::check_range(w1, wr, "w1");
    detail::check_range(w2, wr, "w2");
    detail::check_range(x1, kActRange, "x1");
    detail::check_range(x2, kActRange, "x2");
    const std::int64_t port_a = w1 + w2 * (std::int64_t{1} << lay.shift_w2);
    const std::int64_t port_b = x1 + x2 * (std::int64_t{1} << lay.shift_x2);
    const std::int64_t p = port_a * port_b;
    const auto [p11, r1] = detail::take_field(p, lay, lay.shift_x2);
    const auto [cross21, r2] = detail::take_field(r1, lay, lay.shift_w2 - lay.shift_x2);
    const auto [cross12, p22] = detail::take_field(r2, lay, lay.shift_x2);
    (void)cross21;
    (void)cross12;
    return {p11, p22};
}

/// Outcome of an exhaustive layout sweep.
struct SweepResult {
    PackMode mode = PackMode::pack2_w8;
    std::int64_t cases = 0;
    std::int64_t mismatches = 0;
    /// First failing input: (w1, w2, x) for pack2, (w1, w2, x1, x2) for pack4.
    std::optional<std::vector<std::int64_t>> counterexample;

    bool pass() const { return mismatches == 0; }
};

/// Every legal input of the layout's mode against independent multiplication.
/// `x_zero_only` restricts activations to 0 (a smoke subset).
inline SweepResult sweep_layout(const DspPackLayout& lay, bool x_zero_only = false) {
    lay.validate();
    SweepResult res;
    res.mode = lay.mode;
    const auto wr = weight_range(lay.mode);
    const std::int64_t xlo = x_zero_only ? 0 : kActRange.lo, xhi = x_zero_only ? 0 : kActRange.hi;
    auto miss = [&](std::vector<std::int64_t> c) {
        if (!res.counterexample) res.counterexample = std::move(c);
        ++res.mismatches;
    };
    if (!lay.packs_activations()) {
        for (std::int64_t w1 = wr.lo; w1 <= wr.hi; ++w1)
            for (std::int64_t w2 = wr.lo; w2 <= wr.hi; ++w2)
                for (std::int64_t x = xlo; x <= xhi; ++x) {
                    const auto [p1, p2] = dsp_mul_pack2(w1, w2, x, lay);
                    ++res.cases;
                    if (p1 != w1 * x || p2 != w2 * x) miss({w1, w2, x});
                }
    } else {
        for (std::int64_t w1 = wr.lo; w1 <= wr.hi; ++w1)
            for (std::int64_t w2 = wr.lo; w2 <= wr.hi; ++w2)
                for (std::int64_t x1 = xlo; x1 <= xhi; ++x1)
                    for (std::int64_t x2 = xlo; x2 <= xhi; ++x2) {
                        const auto [p11, p22] = dsp_mul_pack4(w1, w2, x1, x2, lay);
                        ++res.cases;
                        if (p11 != x1 * w1 || p22 != x2 * w2) miss({w1, w2, x1, x2});
                    }
    }
    return res;
}

inline void to_json(nlohmann::json& j, const DspPackLayout& l) {
    j = nlohmann::json{{"mode", std::string(to_string(l.mode))},
                       {"shift_w2", l.shift_w2},
                       {"shift_x2", l.shift_x2},
                       {"field_width", l.field_width},
                       {"field_lo", l.field_lo},
                       {"guard_bits", l.guard_bits()}};
}

inline void from_json(const nlohmann::json& j, DspPackLayout& l) {
    try {
        l.mode = pack_mode_from(j.at("mode").get<std::string>());
        l.shift_w2 = j.at("shift_w2").get<int>();
        l.shift_x2 = j.value("shift_x2", 0);
        l.field_width = j.at("field_width").get<int>();
        l.field_lo = j.at("field_lo").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dsp layout: ") + e.what());
    }
    l.validate();
}

}  // namespace accllm::sim
