// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "accllm/core/model.hpp"
#include "accllm/sim/config.hpp"
#include "accllm/sim/schedule.hpp"

namespace accllm::sim {

/// One cumulative ablation step and the speedup it is expected to deliver
/// over the previous step.
struct AblationScenario {
    std::string name;
    CompressionFlags flags;
    std::optional<double> target_speedup;
};

/// Baseline W8A8 dense with an 8-bit full cache, then +2:4 pruning, +W2 with
/// rank-64 LoRA, +KV4 on the Lambda cache, +DSP packing.
inline std::vector<AblationScenario> default_ablation() {
    CompressionFlags f;
    f.weight_bits = 8;
    f.act_bits = 8;
    f.kv_bits = 8;
    std::vector<AblationScenario> s{{"baseline_w8a8kv8", f, std::nullopt}};
    f.prune = true;
    s.push_back({"+prune_2_4", f, 1.39});
    f.weight_bits = 2;
    f.lora_rank = 64;
    s.push_back({"+w2_lora", f, 1.91});
    f.kv_bits = 4;
    f.lambda = true;
    s.push_back({"+kv4_lambda", f, 1.05});
    f.packing = true;
    s.push_back({"+dsp_packing", f, 1.28});
    return s;
}

struct AblationRow {
    std::string name;
    double tokens_per_second = 0.0;
    double speedup = 1.0;  // over the previous row
    std::optional<double> target;
    bool within_tolerance = true;
};

struct AblationResult {
    std::vector<AblationRow> rows;
    double tolerance = 0.20;
    bool all_speedups_at_least_one = true;
    bool ordering_holds = true;  // W2 > pruning > packing > KV4
    bool all_within_tolerance = true;

    bool pass() const { return all_speedups_at_least_one && ordering_holds && all_within_tolerance; }

    const AblationRow* find(const std::string& name) const {
        for (const auto& r : rows)
            if (r.name == name) return &r;
        return nullptr;
    }
};

struct AblationWorkload {
    std::int64_t in_tokens = 128;
    std::int64_t out_tokens = 512;
};

/// Decode tokens/s per scenario and step speedups, with the expected-order
/// and tolerance checks evaluated (not enforced: callers decide on failure).
inline AblationResult ablate(const AcceleratorConfig& cfg, const ModelDims& dims,
                             const std::vector<AblationScenario>& scenarios, AblationWorkload wl = {},
                             double tolerance = 0.20) {
    if (scenarios.empty()) throw ConfigError("ablate: empty scenario list");
    AblationResult res;
    res.tolerance = tolerance;
    for (const auto& s : scenarios) {
        AblationRow row;
        row.name = s.name;
        row.tokens_per_second = decode_throughput(dims, s.flags, cfg, wl.in_tokens, wl.out_tokens);
        if (!res.rows.empty()) row.speedup = row.tokens_per_second / res.rows.back().tokens_per_second;
        row.target = s.target_speedup;
        if (row.target) row.within_tolerance = std::abs(row.speedup / *row.target - 1.0) <= tolerance;
        res.all_speedups_at_least_one = res.all_speedups_at_least_one && row.speedup >= 1.0;
        res.all_within_tolerance = res.all_within_tolerance && row.within_tolerance;
        res.rows.push_back(row);
    }
    const auto* prune = res.find("+prune_2_4");
    const auto* w2 = res.find("+w2_lora");
    const auto* kv4 = res.find("+kv4_lambda");
    const auto* pack = res.find("+dsp_packing");
    if (prune && w2 && kv4 && pack)
        res.ordering_holds = w2->speedup > prune->speedup && prune->speedup > pack->speedup && pack->speedup > kv4->speedup;
    return res;
}

inline std::string ablation_csv(const AblationResult& r) {
    std::string out = "scenario,tokens_per_second,speedup,target_speedup,within_tolerance\n";
    for (const auto& row : r.rows)
        out += row.name + "," + fmt_num(row.tokens_per_second) + "," + fmt_num(row.speedup) + "," +
               (row.target ? fmt_num(*row.target) : std::string()) + "," + (row.within_tolerance ? "true" : "false") + "\n";
    return out;
}

inline nlohmann::json ablation_json(const AblationResult& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"scenario", row.name},
                        {"tokens_per_second", row.tokens_per_second},
                        {"speedup", row.speedup},
                        {"target_speedup", row.target ? nlohmann::json(*row.target) : nlohmann::json(nullptr)},
                        {"within_tolerance", row.within_tolerance}});
    return {{"rows", rows},
            {"tolerance", r.tolerance},
            {"all_speedups_at_least_one", r.all_speedups_at_least_one},
            {"ordering_holds", r.ordering_holds},
            {"all_within_tolerance", r.all_within_tolerance},
            {"pass", r.pass()}};
}

}  // namespace accllm::sim
