// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "accllm/core/common.hpp"
#include "accllm/core/model.hpp"
#include "accllm/sim/ablation.hpp"
#include "accllm/sim/config.hpp"
#include "accllm/sim/schedule.hpp"

namespace accllm::cli {

/// Embedded assertions a scenario can carry. Each one turns into a line of
/// summary.json and a nonzero exit status when it fails.
enum class Check { kvmem_triple, linear_share, fp16_utilization, throughput, ablation, functional };

inline constexpr std::string_view to_string(Check c) {
    switch (c) {
        case Check::kvmem_triple: return "kvmem_triple";
        case Check::linear_share: return "linear_share";
        case Check::fp16_utilization: return "fp16_utilization";
        case Check::throughput: return "throughput";
        case Check::ablation: return "ablation";
        case Check::functional: return "functional";
    }
    return "?";
}

inline Check check_from(std::string_view s) {
    for (auto c : {Check::kvmem_triple, Check::linear_share, Check::fp16_utilization, Check::throughput,
                   Check::ablation, Check::functional})
        if (to_string(c) == s) return c;
    throw ConfigError("unknown check: " + std::string(s));
}

enum class StageSel { prefill, decode, both };

inline constexpr std::string_view to_string(StageSel s) {
    return s == StageSel::prefill ? "prefill" : s == StageSel::decode ? "decode" : "both";
}

inline std::vector<Stage> stages_of(StageSel s) {
    if (s == StageSel::prefill) return {Stage::prefill};
    if (s == StageSel::decode) return {Stage::decode};
    return {Stage::prefill, Stage::decode};
}

/// Everything one run needs. Presets fill the same structure the JSON spec
/// and the flags do.
struct ScenarioSpec {
    std::string name = "custom";
    std::string dims_preset = "llama2-7b";  // empty when dims were given inline
    ModelDims dims = ModelDims::llama2_7b();
    sim::CompressionFlags flags = sim::CompressionFlags::full();
    std::string accel_preset = "u280";
    sim::AcceleratorConfig accel = sim::AcceleratorConfig::u280();
    StageSel stage = StageSel::both;
    std::vector<std::int64_t> lengths{512};  // the first one drives cycles and roofline
    std::vector<std::uint64_t> seeds;
    sim::AblationWorkload workload;
    std::vector<Check> checks;

    bool has(Check c) const { return std::find(checks.begin(), checks.end(), c) != checks.end(); }

    void validate() const {
        dims.validate();
        flags.validate();
        accel.validate();
        if (name.empty()) throw ConfigError("spec: name must be non-empty");
        if (lengths.empty()) throw ConfigError("spec: at least one sequence length is required");
        for (auto l : lengths)
            if (l < 1) throw ConfigError("spec: sequence lengths must be >= 1");
        if (workload.in_tokens < 1 || workload.out_tokens < 1) throw ConfigError("spec: workload token counts must be >= 1");
        if (has(Check::functional) && seeds.empty()) throw ConfigError("spec: the functional check needs seeds");
    }
};

/// "256..4096" expands by doubling; "128,512" is an explicit list.
inline std::vector<std::int64_t> parse_lengths(std::string_view s) {
    auto to_int = [](std::string_view t) {
        std::size_t used = 0;
        const std::string str(t);
        std::int64_t v = 0;
        try {
            v = std::stoll(str, &used);
        } catch (const std::exception&) {
            throw ConfigError("bad sequence length: '" + str + "'");
        }
        if (used != str.size() || v < 1) throw ConfigError("bad sequence length: '" + str + "'");
        return v;
    };
    std::vector<std::int64_t> out;
    if (const auto dots = s.find(".."); dots != std::string_view::npos) {
        const std::int64_t lo = to_int(s.substr(0, dots)), hi = to_int(s.substr(dots + 2));
        if (lo > hi) throw ConfigError("bad length range: lower bound exceeds upper bound");
        for (std::int64_t l = lo; l <= hi; l *= 2) out.push_back(l);
        return out;
    }
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        out.push_back(to_int(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"kvmem",      "breakdown",  "roofline",   "throughput",
                                                "ablation",   "functional", "fp16-decode"};
    return names;
}

/// Named scenarios, one per reproducible claim.
inline ScenarioSpec scenario_preset(std::string_view name) {
    ScenarioSpec s;
    s.name = std::string(name);
    if (name == "kvmem") {
        s.checks = {Check::kvmem_triple};
    } else if (name == "breakdown") {
        s.flags = sim::CompressionFlags::fp16();
        s.lengths = {256, 512, 1024, 2048, 4096};
        s.checks = {Check::linear_share};
    } else if (name == "roofline") {
        s.lengths = {512};
    } else if (name == "throughput") {
        s.stage = StageSel::decode;
        s.checks = {Check::throughput};
    } else if (name == "ablation") {
        s.stage = StageSel::decode;
        s.checks = {Check::ablation};
    } else if (name == "functional") {
        s.dims_preset = "toy";
        s.dims = dims_preset("toy");
        s.lengths = {24};
        s.flags.window = 16;    // short enough that the toy prompt evicts
        s.flags.lora_rank = 8;  // below the toy width, so LoRA is a real approximation
        s.seeds = {1, 2, 3};
        s.checks = {Check::functional};
    } else if (name == "fp16-decode") {
        s.flags = sim::CompressionFlags::fp16();
        s.stage = StageSel::decode;
        s.checks = {Check::fp16_utilization};
    } else {
        throw ConfigError("unknown preset: " + std::string(name));
    }
    return s;
}

inline void to_json(nlohmann::json& j, const ScenarioSpec& s) {
    std::vector<std::string> checks;
    for (auto c : s.checks) checks.emplace_back(to_string(c));
    j = nlohmann::json{{"name", s.name},
                       {"dims", s.dims_preset.empty() ? nlohmann::json(s.dims) : nlohmann::json(s.dims_preset)},
                       {"flags", s.flags},
                       {"accelerator", s.accel_preset.empty() ? nlohmann::json(s.accel) : nlohmann::json(s.accel_preset)},
                       {"stage", std::string(to_string(s.stage))},
                       {"lengths", s.lengths},
                       {"seeds", s.seeds},
                       {"workload", {{"in_tokens", s.workload.in_tokens}, {"out_tokens", s.workload.out_tokens}}},
                       {"checks", checks}};
}

/// Reads a spec on top of `base` (a preset or the defaults). Unknown keys are
/// rejected so typos fail loudly.
inline ScenarioSpec spec_from_json(const nlohmann::json& j, ScenarioSpec base = {}) {
    if (!j.is_object()) throw ConfigError("spec must be a JSON object");
    static const std::vector<std::string> known{"name",    "preset", "dims",     "flags",  "accelerator",
                                                "stage",   "lengths", "seeds",   "workload", "checks"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("spec: unknown key '" + k + "'");
    ScenarioSpec s = j.contains("preset") ? scenario_preset(j.at("preset").get<std::string>()) : std::move(base);
    try {
        if (j.contains("name")) s.name = j.at("name").get<std::string>();
        if (j.contains("dims")) {
            const auto& d = j.at("dims");
            if (d.is_string()) {
                s.dims_preset = d.get<std::string>();
                s.dims = dims_preset(s.dims_preset);
            } else {
                s.dims_preset.clear();
                s.dims = d.get<ModelDims>();
            }
        }
        if (j.contains("flags")) s.flags = j.at("flags").get<sim::CompressionFlags>();
        if (j.contains("accelerator")) {
            const auto& a = j.at("accelerator");
            if (a.is_string()) {
                s.accel_preset = a.get<std::string>();
                s.accel = sim::accelerator_preset(s.accel_preset);
            } else {
                s.accel_preset.clear();
                s.accel = a.get<sim::AcceleratorConfig>();
            }
        }
        if (j.contains("stage")) {
            const auto st = j.at("stage").get<std::string>();
            if (st == "prefill") s.stage = StageSel::prefill;
            else if (st == "decode") s.stage = StageSel::decode;
            else if (st == "both") s.stage = StageSel::both;
            else throw ConfigError("spec: stage must be prefill, decode or both");
        }
        if (j.contains("lengths")) {
            const auto& l = j.at("lengths");
            s.lengths = l.is_string() ? parse_lengths(l.get<std::string>()) : l.get<std::vector<std::int64_t>>();
        }
        if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("workload")) {
            s.workload.in_tokens = j.at("workload").value("in_tokens", s.workload.in_tokens);
            s.workload.out_tokens = j.at("workload").value("out_tokens", s.workload.out_tokens);
        }
        if (j.contains("checks")) {
            s.checks.clear();
            for (const auto& c : j.at("checks")) s.checks.push_back(check_from(c.get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("spec: ") + e.what());
    }
    s.validate();
    return s;
}

}  // namespace accllm::cli
