// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "accllm/core/complexity.hpp"
#include "accllm/core/model.hpp"
#include "accllm/sim/config.hpp"
#include "accllm/sim/rce.hpp"
#include "accllm/sim/schedule.hpp"

namespace accllm::sim {

struct RooflinePoint {
    double intensity = 0.0;    // ops / byte
    double attainable = 0.0;   // ops / s
    double peak = 0.0;         // ops / s
    double ridge = 0.0;        // ops / byte where the two roofs meet
    Bound bound = Bound::memory;
};

/// Peak ops/s: 2 ops per MAC on every multiplier, scaled by packing.
inline double peak_ops(const AcceleratorConfig& cfg, std::int64_t packing = 1) {
    return 2.0 * static_cast<double>(cfg.multipliers() * packing) * cfg.clock_hz;
}

/// Effective bandwidth roof in bytes/s.
inline double memory_roof(const AcceleratorConfig& cfg) { return cfg.hbm_bw_Bps * cfg.mem_efficiency; }

/// attainable = min(peak, intensity * bw * efficiency).
inline RooflinePoint roofline_at(double intensity, const AcceleratorConfig& cfg, std::int64_t packing = 1) {
    cfg.validate();
    if (!(intensity > 0.0)) throw ConfigError("roofline: intensity must be > 0");
    RooflinePoint p;
    p.intensity = intensity;
    p.peak = peak_ops(cfg, packing);
    p.ridge = p.peak / memory_roof(cfg);
    const double mem = std::isinf(intensity) ? std::numeric_limits<double>::infinity() : intensity * memory_roof(cfg);
    p.attainable = std::min(p.peak, mem);
    p.bound = mem >= p.peak ? Bound::compute : Bound::memory;
    return p;
}

/// Roofline position of one layer's `kind` at `stage` and history/prompt l.
/// Packing follows the flags (W2/W4/W8 with packing on double the peak).
inline RooflinePoint roofline_point(LinearKind kind, Stage stage, const ModelDims& dims, std::int64_t l,
                                    const CompressionFlags& f, const AcceleratorConfig& cfg) {
    f.validate();
    const std::int64_t pack = kind == LinearKind::attention ? detail::kv_pack(f)
                                                           : pack_factor(pack_mode_for(f.weight_bits, f.packing));
    return roofline_at(operation_intensity(kind, stage, dims, l, f.precision()), cfg, pack);
}

}  // namespace accllm::sim
