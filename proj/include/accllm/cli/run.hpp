// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "accllm/attention/kv_memory.hpp"
#include "accllm/cli/scenario.hpp"
#include "accllm/compress/model_pipeline.hpp"
#include "accllm/core/binary_io.hpp"
#include "accllm/core/complexity.hpp"
#include "accllm/core/reference.hpp"
#include "accllm/core/rng.hpp"
#include "accllm/sim/ablation.hpp"
#include "accllm/sim/rce.hpp"
#include "accllm/sim/roofline.hpp"
#include "accllm/sim/schedule.hpp"

namespace accllm::cli {

// Pinned targets of the embedded checks.
inline constexpr double kKvTripleGib[3] = {3.5, 1.0, 0.25};
inline constexpr double kKvTolerance = 0.03;
inline constexpr double kLinearShareMin = 0.90;
inline constexpr double kFp16UtilizationMax = 0.12;
inline constexpr double kThroughputTarget = 164.0;
inline constexpr double kThroughputTolerance = 0.25;
inline constexpr double kAblationTolerance = 0.20;

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// In-memory report: file name -> contents, plus what goes to stderr.
struct Bundle {
    std::map<std::string, std::string> files;
    std::vector<CheckResult> checks;
    std::string diagnostics;

    bool pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
    int exit_code() const { return pass() ? 0 : 1; }
};

// ------------------------------------------------------------- figure data

inline std::string breakdown_csv(const ScenarioSpec& s) {
    std::string out = "l,stage,qkvo_macs,attention_macs,ffn_macs,total_macs,linear_share\n";
    for (auto l : s.lengths)
        for (auto st : stages_of(s.stage)) {
            const auto fb = flops_breakdown(s.dims, l, st);
            out += std::to_string(l) + "," + std::string(to_string(st)) + "," + std::to_string(fb.qkvo) + "," +
                   std::to_string(fb.attention) + "," + std::to_string(fb.ffn) + "," + std::to_string(fb.total()) + "," +
                   sim::fmt_num(fb.linear_share()) + "\n";
        }
    return out;
}

inline std::string roofline_csv(const ScenarioSpec& s) {
    std::string out = "kind,stage,intensity_ops_per_byte,attainable_ops_per_s,bound\n";
    for (auto st : stages_of(s.stage))
        for (auto kind : kAllLinearKinds) {
            const auto p = sim::roofline_point(kind, st, s.dims, s.lengths.front(), s.flags, s.accel);
            out += std::string(to_string(kind)) + "," + std::string(to_string(st)) + "," + sim::fmt_num(p.intensity) +
                   "," + sim::fmt_num(p.attainable) + "," + std::string(sim::to_string(p.bound)) + "\n";
        }
    return out;
}

inline sim::CycleReport stage_report(const ScenarioSpec& s, Stage st) {
    return st == Stage::decode ? sim::schedule_decode(s.dims, s.lengths.front(), s.flags, s.accel)
                               : sim::schedule_prefill(s.dims, s.lengths.front(), s.flags, s.accel);
}

inline std::string cycles_csv(const ScenarioSpec& s) {
    std::string out;
    for (auto st : stages_of(s.stage)) {
        const std::string csv = sim::cycles_csv(stage_report(s, st));
        out += out.empty() ? csv : csv.substr(csv.find('\n') + 1);
    }
    return out;
}

struct KvMemRow {
    std::string config;
    std::int64_t tokens;
    int kv_bits;
};

/// Full cache at 7000 tokens, Lambda window at 2048, Lambda with KV4.
inline std::vector<KvMemRow> kvmem_rows() { return {{"fp16_full", 7000, 16}, {"lambda", 2048, 16}, {"lambda_kv4", 2048, 4}}; }

inline std::string kvmem_csv(const ScenarioSpec& s) {
    std::string out = "config,tokens,kv_bits,code_bytes,scale_bytes,code_gib\n";
    for (const auto& r : kvmem_rows()) {
        const auto m = attn::kv_mem_bytes(s.dims, r.tokens, r.kv_bits);
        out += r.config + "," + std::to_string(r.tokens) + "," + std::to_string(r.kv_bits) + "," +
               sim::fmt_num(m.code_bytes) + "," + sim::fmt_num(m.scale_bytes) + "," + sim::fmt_num(m.code_gib()) + "\n";
    }
    return out;
}

inline sim::AblationResult run_ablation(const ScenarioSpec& s) {
    return sim::ablate(s.accel, s.dims, sim::default_ablation(), s.workload, kAblationTolerance);
}

inline const std::vector<std::string>& figure_ids() {
    static const std::vector<std::string> ids{"breakdown", "roofline", "cycles", "kvmem", "ablation"};
    return ids;
}

inline std::string emit_figure(const ScenarioSpec& s, std::string_view id) {
    s.validate();
    if (id == "breakdown") return breakdown_csv(s);
    if (id == "roofline") return roofline_csv(s);
    if (id == "cycles") return cycles_csv(s);
    if (id == "kvmem") return kvmem_csv(s);
    if (id == "ablation") return sim::ablation_csv(run_ablation(s));
    throw ConfigError("unknown figure id: " + std::string(id));
}

// ---------------------------------------------------------------- checks

namespace detail {

inline std::string fmt(double v) { return sim::fmt_num(v); }

/// Decode report at the middle of the generation window, used to explain
/// throughput misses.
inline sim::CycleReport mid_decode(const ScenarioSpec& s, const sim::CompressionFlags& f) {
    return sim::schedule_decode(s.dims, s.workload.in_tokens + s.workload.out_tokens / 2, f, s.accel);
}

inline CheckResult check_kvmem(const ScenarioSpec& s, nlohmann::json& summary) {
    CheckResult r{"kvmem_triple", true, ""};
    const auto rows = kvmem_rows();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double gib = attn::kv_mem_bytes(s.dims, rows[i].tokens, rows[i].kv_bits).code_gib();
        const bool ok = std::abs(gib / kKvTripleGib[i] - 1.0) <= kKvTolerance;
        r.pass = r.pass && ok;
        r.detail += rows[i].config + "=" + fmt(gib) + "GiB ";
        summary["kv_memory_check"][rows[i].config] = {{"gib", gib}, {"target_gib", kKvTripleGib[i]}, {"pass", ok}};
    }
    r.detail += "(target 3.5/1.0/0.25 within 3%)";
    return r;
}

inline CheckResult check_linear_share(const ScenarioSpec& s) {
    CheckResult r{"linear_share", true, ""};
    double worst = 1.0;
    for (auto l : s.lengths)
        for (auto st : stages_of(s.stage)) worst = std::min(worst, flops_breakdown(s.dims, l, st).linear_share());
    r.pass = worst > kLinearShareMin;
    r.detail = "min linear share " + fmt(worst) + " (> 0.90 required)";
    return r;
}

inline CheckResult check_fp16_utilization(const ScenarioSpec& s) {
    const auto rep = sim::schedule_decode(s.dims, s.lengths.front(), sim::CompressionFlags::fp16(), s.accel);
    const double u = rep.linear_utilization();
    return {"fp16_utilization", u < kFp16UtilizationMax, "decode FP16 linear utilization " + fmt(u) + " (< 0.12 required)"};
}

inline CheckResult check_throughput(const ScenarioSpec& s, nlohmann::json& summary, std::string& diag) {
    const double tps = sim::decode_throughput(s.dims, s.flags, s.accel, s.workload.in_tokens, s.workload.out_tokens);
    const bool ok = std::abs(tps / kThroughputTarget - 1.0) <= kThroughputTolerance;
    summary["throughput_check"] = {{"tokens_per_second", tps}, {"target", kThroughputTarget}, {"tolerance", kThroughputTolerance}};
    if (!ok) diag += "throughput miss: " + fmt(tps) + " tok/s vs 164 +-25%\n" + sim::traffic_breakdown(mid_decode(s, s.flags));
    return {"throughput", ok, fmt(tps) + " tok/s (target 164 +-25%)"};
}

inline CheckResult check_ablation(const ScenarioSpec& s, nlohmann::json& summary, std::string& diag) {
    const auto res = run_ablation(s);
    summary["ablation"] = sim::ablation_json(res);
    std::string detail;
    for (std::size_t i = 1; i < res.rows.size(); ++i) detail += res.rows[i].name + "=" + fmt(res.rows[i].speedup) + " ";
    detail += std::string("ordering ") + (res.ordering_holds ? "holds" : "violated");
    if (!res.pass()) {
        diag += "ablation miss:\n";
        for (const auto& sc : sim::default_ablation())
            diag += "[" + sc.name + "]\n" + sim::traffic_breakdown(mid_decode(s, sc.flags));
    }
    return {"ablation", res.pass(), detail};
}

inline compress::CompressConfig functional_config(const sim::CompressionFlags& f) {
    compress::CompressConfig c;
    c.prune = f.prune;
    c.weight_bits = f.weight_bits;
    c.act_bits = f.act_bits;
    c.lora_rank = static_cast<std::size_t>(f.lora_rank);
    return c;
}

/// Compresses a synthesized toy model per seed, runs it end to end against
/// the float reference, and runs its first projection through every RCE
/// configuration against the integer reference.
inline CheckResult check_functional(const ScenarioSpec& s, nlohmann::json& summary) {
    const auto& f = s.flags;
    if (f.weight_bits > 8 || (f.act_bits != 4 && f.act_bits != 8) || (f.kv_bits != 4 && f.kv_bits != 8))
        throw ConfigError("functional check needs W2/W4/W8, A4/A8 and KV4/KV8");
    CheckResult r{"functional", true, ""};
    const auto d = static_cast<std::size_t>(s.dims.d);
    const auto l = static_cast<std::size_t>(s.lengths.front());
    nlohmann::json runs = nlohmann::json::array();
    for (auto seed : s.seeds) {
        const auto layers = synth_model(seed, s.dims);
        Rng rng(seed ^ 0x5eedULL);
        const DenseMatrix calib = DenseMatrix::gaussian(2 * d, d, rng);
        const DenseMatrix x = DenseMatrix::gaussian(l, d, rng);
        compress::ModelCompressStats st;
        const auto cm = compress::compress_model(layers, s.dims, calib, functional_config(f), &st);
        compress::PipelineOptions opt;
        opt.act_bits = f.act_bits;
        opt.kv_bits = f.kv_bits;
        opt.n_sink = static_cast<std::size_t>(f.lambda ? f.n_sink : 0);
        opt.window = f.lambda ? static_cast<std::size_t>(f.window) : l;
        const DenseMatrix ref = reference_forward(x, layers, s.dims, AttentionMask::causal(l));
        const double mse = mean_squared(compress::compressed_forward(x, cm, s.dims, opt) - ref);
        const bool lora_ok = f.lora_rank == 0 || st.weight_error < st.weight_error_no_lora;

        bool rce_ok = true;
        const auto xq = compress::quant_per_token_act(x, f.act_bits);
        const auto x1 = compress::quant_per_token_act(DenseMatrix::gaussian(1, d, rng), f.act_bits);
        const auto& w = cm.front().wq;
        for (bool packing : {false, true}) {
            rce_ok = rce_ok && sim::rce_execute(xq, w, sim::RceMode::MM, packing, s.accel).output ==
                                   compress::compressed_linear_forward(xq, w);
            for (auto mode : {sim::RceMode::MM, sim::RceMode::VM})
                rce_ok = rce_ok && sim::rce_execute(x1, w, mode, packing, s.accel).output ==
                                       compress::compressed_linear_forward(x1, w);
        }
        const bool ok = std::isfinite(mse) && lora_ok && rce_ok;
        r.pass = r.pass && ok;
        runs.push_back({{"seed", seed},
                        {"output_mse", mse},
                        {"weight_error", st.weight_error},
                        {"weight_error_no_lora", st.weight_error_no_lora},
                        {"rce_bit_identical", rce_ok},
                        {"pass", ok}});
    }
    summary["functional"] = runs;
    r.detail = std::to_string(s.seeds.size()) + " seeds: finite MSE, LoRA lowers weight error, RCE bit-identical";
    return r;
}

}  // namespace detail

/// Runs a validated scenario into an in-memory bundle. Nothing touches disk
/// here, so an invalid spec can never leave partial outputs behind.
inline Bundle run_scenario(const ScenarioSpec& s) {
    s.validate();
    Bundle b;
    nlohmann::json summary;
    summary["name"] = s.name;
    summary["spec"] = s;
    summary["evaluation_length"] = s.lengths.front();
    for (const auto& r : kvmem_rows())
        summary["kv_memory_gib"][r.config] = attn::kv_mem_bytes(s.dims, r.tokens, r.kv_bits).code_gib();
    for (auto st : stages_of(s.stage)) summary["stages"][std::string(to_string(st))] = sim::summary_json(stage_report(s, st));

    b.files["breakdown.csv"] = breakdown_csv(s);
    b.files["roofline.csv"] = roofline_csv(s);
    b.files["cycles.csv"] = cycles_csv(s);

    for (auto c : s.checks) {
        switch (c) {
            case Check::kvmem_triple: b.checks.push_back(detail::check_kvmem(s, summary)); break;
            case Check::linear_share: b.checks.push_back(detail::check_linear_share(s)); break;
            case Check::fp16_utilization: b.checks.push_back(detail::check_fp16_utilization(s)); break;
            case Check::throughput: b.checks.push_back(detail::check_throughput(s, summary, b.diagnostics)); break;
            case Check::ablation:
                b.checks.push_back(detail::check_ablation(s, summary, b.diagnostics));
                b.files["ablation.csv"] = sim::ablation_csv(run_ablation(s));
                break;
            case Check::functional: b.checks.push_back(detail::check_functional(s, summary)); break;
        }
    }
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : b.checks) checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    summary["checks"] = checks;
    summary["pass"] = b.pass();
    b.files["summary.json"] = summary.dump(2) + "\n";
    return b;
}

/// Writes every file of the bundle with write-temp-then-rename.
inline void write_bundle(const Bundle& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, text] : b.files) write_file_atomic(dir / name, text);
}

}  // namespace accllm::cli
