// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "accllm/core/binary_io.hpp"
#include "accllm/core/common.hpp"
#include "accllm/sim/dsp_pack.hpp"

namespace accllm::cli {

inline std::vector<sim::DspPackLayout> default_layouts() {
    return {sim::default_layout(sim::PackMode::pack2_w8), sim::default_layout(sim::PackMode::pack2_w4q8),
            sim::default_layout(sim::PackMode::pack4_w2a8)};
}

/// `{"layouts": [...]}`; each entry is validated on load.
inline std::vector<sim::DspPackLayout> load_layouts(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ConfigError("layout file not found: " + path.string());
    const Bytes raw = read_file(path);
    const auto j = nlohmann::json::parse(raw.begin(), raw.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("layouts") || !j.at("layouts").is_array())
        throw ConfigError("layout file must be an object with a 'layouts' array: " + path.string());
    std::vector<sim::DspPackLayout> out;
    for (const auto& e : j.at("layouts")) out.push_back(e.get<sim::DspPackLayout>());
    if (out.empty()) throw ConfigError("layout file declares no layouts");
    return out;
}

/// Narrows the pack2_w8 fields so products spill into each other: the sweep
/// must catch it.
inline sim::DspPackLayout corrupted_layout() { return {sim::PackMode::pack2_w8, 12, 0, 12, -2048}; }

struct LayoutReport {
    std::vector<sim::DspPackLayout> layouts;
    std::vector<sim::SweepResult> results;

    bool pass() const {
        for (const auto& r : results)
            if (!r.pass()) return false;
        return true;
    }
};

inline LayoutReport verify_layouts(const std::vector<sim::DspPackLayout>& layouts, bool x_zero_only = false) {
    LayoutReport rep;
    rep.layouts = layouts;
    for (const auto& l : layouts) rep.results.push_back(sim::sweep_layout(l, x_zero_only));
    return rep;
}

inline nlohmann::json layout_report_json(const LayoutReport& rep) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < rep.layouts.size(); ++i) {
        const auto& r = rep.results[i];
        rows.push_back({{"layout", rep.layouts[i]},
                        {"hash", rep.layouts[i].hash()},
                        {"cases", r.cases},
                        {"mismatches", r.mismatches},
                        {"pass", r.pass()},
                        {"counterexample", r.counterexample ? nlohmann::json(*r.counterexample) : nlohmann::json(nullptr)}});
    }
    return {{"layouts", rows}, {"pass", rep.pass()}};
}

}  // namespace accllm::cli
