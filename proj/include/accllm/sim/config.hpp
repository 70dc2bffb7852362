// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "accllm/core/common.hpp"

namespace accllm::sim {

/// RCE geometry and platform constants. R multipliers per PE block, M blocks
/// per tile, T tiles.
struct AcceleratorConfig {
    std::int64_t R = 32;
    std::int64_t M = 16;
    std::int64_t T = 16;
    double clock_hz = 225e6;
    std::int64_t dsp_budget = 4497;
    double hbm_bw_Bps = 460e9;
    double ddr_bw_Bps = 38e9;
    std::int64_t onchip_buffer_bytes = 513 * 4608;  // 513 BRAM36 blocks
    double mem_efficiency = 0.8;

    std::int64_t multipliers() const { return R * M * T; }

    void validate() const {
        if (R < 1 || M < 1 || T < 1) throw ConfigError("accelerator: R, M, T must be >= 1");
        if (!(clock_hz > 0.0)) throw ConfigError("accelerator: clock_hz must be > 0");
        if (dsp_budget < 1) throw ConfigError("accelerator: dsp_budget must be >= 1");
        if (!(hbm_bw_Bps > 0.0) || !(ddr_bw_Bps > 0.0)) throw ConfigError("accelerator: bandwidths must be > 0");
        if (onchip_buffer_bytes < 1) throw ConfigError("accelerator: onchip_buffer_bytes must be >= 1");
        if (!(mem_efficiency > 0.0 && mem_efficiency <= 1.0))
            throw ConfigError("accelerator: mem_efficiency must be in (0, 1]");
    }

    /// Alveo U280 at the published (32 x 16) x 16 configuration.
    static AcceleratorConfig u280() { return {}; }
};

inline AcceleratorConfig accelerator_preset(std::string_view name) {
    if (name == "u280") return AcceleratorConfig::u280();
    throw ConfigError("unknown accelerator preset: " + std::string(name));
}

inline void to_json(nlohmann::json& j, const AcceleratorConfig& c) {
    j = nlohmann::json{{"R", c.R},
                       {"M", c.M},
                       {"T", c.T},
                       {"clock_hz", c.clock_hz},
                       {"dsp_budget", c.dsp_budget},
                       {"hbm_bw_Bps", c.hbm_bw_Bps},
                       {"ddr_bw_Bps", c.ddr_bw_Bps},
                       {"onchip_buffer_bytes", c.onchip_buffer_bytes},
                       {"mem_efficiency", c.mem_efficiency}};
}

/// Missing keys keep their U280 defaults.
inline void from_json(const nlohmann::json& j, AcceleratorConfig& c) {
    if (!j.is_object()) throw ConfigError("accelerator config must be a JSON object");
    c = AcceleratorConfig{};
    try {
        c.R = j.value("R", c.R);
        c.M = j.value("M", c.M);
        c.T = j.value("T", c.T);
        c.clock_hz = j.value("clock_hz", c.clock_hz);
        c.dsp_budget = j.value("dsp_budget", c.dsp_budget);
        c.hbm_bw_Bps = j.value("hbm_bw_Bps", c.hbm_bw_Bps);
        c.ddr_bw_Bps = j.value("ddr_bw_Bps", c.ddr_bw_Bps);
        c.onchip_buffer_bytes = j.value("onchip_buffer_bytes", c.onchip_buffer_bytes);
        c.mem_efficiency = j.value("mem_efficiency", c.mem_efficiency);
    } catch (const nlohmann::json::type_error& e) {
        throw ConfigError(std::string("accelerator config: ") + e.what());
    }
    c.validate();
}

}  // namespace accllm::sim
