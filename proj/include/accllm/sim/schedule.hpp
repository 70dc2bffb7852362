// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "accllm/core/common.hpp"
#include "accllm/core/complexity.hpp"
#include "accllm/core/model.hpp"
#include "accllm/sim/config.hpp"
#include "accllm/sim/rce.hpp"

namespace accllm::sim {

/// Which compression features a scheduled model uses.
struct CompressionFlags {
    bool prune = false;
    int weight_bits = 16;
    int act_bits = 16;
    int kv_bits = 16;
    std::int64_t lora_rank = 0;
    bool lambda = false;
    std::int64_t n_sink = 4;
    std::int64_t window = 2044;
    bool packing = false;
    bool include_metadata = true;
    bool fused_attention = true;

    static CompressionFlags fp16() { return {}; }
    /// 2:4 + W2A8KV4 + rank-64 LoRA + Lambda cache + DSP packing.
    static CompressionFlags full() {
        CompressionFlags f;
        f.prune = true;
        f.weight_bits = 2;
        f.act_bits = 8;
        f.kv_bits = 4;
        f.lora_rank = 64;
        f.lambda = true;
        f.packing = true;
        return f;
    }

    Precision precision() const { return {weight_bits, act_bits, kv_bits, include_metadata}; }

    void validate() const {
        validate_bits(weight_bits);
        validate_bits(act_bits);
        validate_bits(kv_bits);
        if (weight_bits == 16 && act_bits < 16) throw ConfigError("flags: integer activations need integer weights");
        if (lora_rank < 0) throw ConfigError("flags: lora_rank must be >= 0");
        if (lora_rank > 0 && weight_bits == 16) throw ConfigError("flags: LoRA compensation needs quantized weights");
        if (lambda && (n_sink < 0 || window < 1)) throw ConfigError("flags: lambda needs n_sink >= 0 and window >= 1");
        if (packing && (weight_bits > 8 || act_bits > 8))
            throw ConfigError("flags: DSP packing needs weights and activations of at most 8 bits");
    }

    bool operator==(const CompressionFlags&) const = default;
};

inline void to_json(nlohmann::json& j, const CompressionFlags& f) {
    j = nlohmann::json{{"prune", f.prune},         {"w_bits", f.weight_bits},
                       {"a_bits", f.act_bits},     {"kv_bits", f.kv_bits},
                       {"lora_rank", f.lora_rank}, {"lambda", {{"enabled", f.lambda}, {"n_sink", f.n_sink}, {"window", f.window}}},
                       {"packing", f.packing},     {"include_metadata", f.include_metadata},
                       {"fused_attention", f.fused_attention}};
}

inline void from_json(const nlohmann::json& j, CompressionFlags& f) {
    if (!j.is_object()) throw ConfigError("compression flags must be a JSON object");
    f = CompressionFlags{};
    try {
        f.prune = j.value("prune", f.prune);
        f.weight_bits = j.value("w_bits", f.weight_bits);
        f.act_bits = j.value("a_bits", f.act_bits);
        f.kv_bits = j.value("kv_bits", f.kv_bits);
        f.lora_rank = j.value("lora_rank", f.lora_rank);
        if (j.contains("lambda")) {
            const auto& l = j.at("lambda");
            f.lambda = l.value("enabled", true);
            f.n_sink = l.value("n_sink", f.n_sink);
            f.window = l.value("window", f.window);
        }
        f.packing = j.value("packing", f.packing);
        f.include_metadata = j.value("include_metadata", f.include_metadata);
        f.fused_attention = j.value("fused_attention", f.fused_attention);
    } catch (const nlohmann::json::type_error& e) {
        throw ConfigError(std::string("compression flags: ") + e.what());
    }
    f.validate();
}

/// Bytes moved by one stage, by category. Everything except act_* and
/// intermediate travels over HBM; those use DDR (decode keeps them on chip).
struct Traffic {
    double weight = 0.0;
    double metadata = 0.0;  // weight scales / zero points and KV scales
    double index = 0.0;     // 2:4 position codes
    double lora = 0.0;
    double kv_read = 0.0;
    double kv_write = 0.0;
    double act_read = 0.0;      // DDR, prefill only
    double act_write = 0.0;     // DDR, prefill only
    double intermediate = 0.0;  // attention scores written and read back (unfused only)

    double activation() const { return act_read + act_write; }
    double hbm_read() const { return weight + metadata + index + lora + kv_read; }
    double hbm() const { return hbm_read() + kv_write; }
    double ddr() const { return activation() + intermediate; }
    double read() const { return hbm_read() + act_read + intermediate / 2.0; }
    double written() const { return kv_write + act_write + intermediate / 2.0; }
    double total() const { return hbm() + ddr(); }

    Traffic& operator+=(const Traffic& o) {
        weight += o.weight;
        metadata += o.metadata;
        index += o.index;
        lora += o.lora;
        kv_read += o.kv_read;
        kv_write += o.kv_write;
        act_read += o.act_read;
        act_write += o.act_write;
        intermediate += o.intermediate;
        return *this;
    }
};

enum class Bound { compute, memory };

inline constexpr std::string_view to_string(Bound b) { return b == Bound::compute ? "compute" : "memory"; }

struct StageRow {
    std::int64_t layer = 0;
    LinearKind kind = LinearKind::qkvo;
    Stage stage = Stage::decode;
    std::int64_t compute_cycles = 0;
    double memory_cycles = 0.0;
    std::int64_t macs = 0;
    Traffic traffic;

    /// Double buffering overlaps the two; the stage takes the longer one.
    double stage_cycles() const { return std::max(static_cast<double>(compute_cycles), memory_cycles); }
    Bound bound() const { return static_cast<double>(compute_cycles) >= memory_cycles ? Bound::compute : Bound::memory; }
    double bytes_read() const { return traffic.read(); }
    double bytes_written() const { return traffic.written(); }
};

struct CycleReport {
    Stage stage = Stage::decode;
    std::int64_t l = 1;
    std::int64_t pack = 1;  // useful MACs per multiplier per cycle for the weight path
    double clock_hz = 0.0;
    std::int64_t multipliers = 0;
    std::vector<StageRow> rows;

    double total_cycles() const {
        double c = 0.0;
        for (const auto& r : rows) c += r.stage_cycles();
        return c;
    }
    /// Decode: tokens per second for this step. Prefill: prompt tokens per second.
    double tokens_per_second() const {
        const double tokens = stage == Stage::decode ? 1.0 : static_cast<double>(l);
        return tokens * clock_hz / total_cycles();
    }
    Traffic traffic(std::optional<LinearKind> kind = std::nullopt) const {
        Traffic t;
        for (const auto& r : rows)
            if (!kind || r.kind == *kind) t += r.traffic;
        return t;
    }
    /// Achieved MACs of the qkvo and ffn stages over what the array could do
    /// in the same cycles at this precision's packing.
    double linear_utilization() const {
        double macs = 0.0, cycles = 0.0;
        for (const auto& r : rows)
            if (r.kind != LinearKind::attention) {
                macs += static_cast<double>(r.macs);
                cycles += r.stage_cycles();
            }
        return macs / (cycles * static_cast<double>(multipliers * pack));
    }
};

namespace detail {

inline double to_cycles(double bytes, double bw, const AcceleratorConfig& cfg) {
    return bytes / (bw * cfg.mem_efficiency) * cfg.clock_hz;
}

/// Storage of one out x in weight matrix under the flags.
inline Traffic matrix_traffic(std::int64_t out, std::int64_t in, const CompressionFlags& f) {
    Traffic t;
    const std::int64_t in_pad = f.prune ? ceil_div(in, 4) * 4 : in;
    const std::int64_t kept_per_row = f.prune ? in_pad / 2 : in;
    const double kept = static_cast<double>(out * kept_per_row);
    t.weight = kept * f.weight_bits / 8.0;
    if (f.prune) t.index = kept * 2.0 / 8.0;
    if (f.include_metadata && f.weight_bits < 16)
        t.metadata = static_cast<double>(out * ceil_div(kept_per_row, kWeightGroupSize) * (kScaleBytes + kZeroPointBytes));
    if (f.lora_rank > 0) {
        t.lora = static_cast<double>(f.lora_rank * (out + in));  // 8-bit A and B
        if (f.include_metadata) t.lora += static_cast<double>((out + f.lora_rank) * (kScaleBytes + kZeroPointBytes));
    }
    return t;
}

inline std::int64_t linear_cycles(std::int64_t tokens, std::int64_t out, std::int64_t in, RceMode mode,
                                  const CompressionFlags& f, const AcceleratorConfig& cfg) {
    const std::int64_t pf = pack_factor(pack_mode_for(f.weight_bits, f.packing));
    std::int64_t c = rce_cycles({tokens, in, out}, mode, f.prune, pf, cfg);
    if (f.lora_rank > 0) {
        const std::int64_t lp = pack_factor(pack_mode_for(8, f.packing));
        c += rce_cycles({tokens, in, f.lora_rank}, mode, false, lp, cfg) +
             rce_cycles({tokens, f.lora_rank, out}, mode, false, lp, cfg);
    }
    return c;
}

inline std::int64_t kv_pack(const CompressionFlags& f) { return f.packing && f.kv_bits <= 8 && f.act_bits <= 8 ? 2 : 1; }

/// Number of keys query `i` (0-based) sees under the flags.
inline std::int64_t visible_keys(std::int64_t i, const CompressionFlags& f) {
    return f.lambda ? std::min(i + 1, f.n_sink + f.window) : i + 1;
}

/// Distinct keys visible to any query in [q0, q1).
inline std::int64_t tile_keys(std::int64_t q0, std::int64_t q1, const CompressionFlags& f) {
    if (!f.lambda) return q1;
    const std::int64_t sinks = std::min(f.n_sink, q1);
    const std::int64_t win_lo = std::max(sinks, q0 - f.window + 1);
    return sinks + std::max<std::int64_t>(0, q1 - win_lo);
}

inline double kv_bytes(std::int64_t tokens, const ModelDims& dims, const CompressionFlags& f) {
    return 2.0 * kv_tensor_bytes(tokens, dims, f.kv_bits, false);
}
inline double kv_scale_bytes(std::int64_t tokens, const ModelDims& dims, const CompressionFlags& f) {
    return f.include_metadata && f.kv_bits < 16 ? 2.0 * static_cast<double>(tokens * dims.h * kScaleBytes) : 0.0;
}

}  // namespace detail

/// One decode step with `l` tokens of history. Per layer: qkvo and ffn in VM
/// mode with weights streamed from HBM, fused attention over the retained
/// cache with K/V streamed at kv_bits; activations stay on chip.
inline CycleReport schedule_decode(const ModelDims& dims, std::int64_t l, const CompressionFlags& f,
                                   const AcceleratorConfig& cfg) {
    dims.validate();
    f.validate();
    cfg.validate();
    if (l < 1) throw ConfigError("schedule_decode: l must be >= 1");
    CycleReport rep;
    rep.stage = Stage::decode;
    rep.l = l;
    rep.pack = pack_factor(pack_mode_for(f.weight_bits, f.packing));
    rep.clock_hz = cfg.clock_hz;
    rep.multipliers = cfg.multipliers();
    const std::int64_t d = dims.d, dff = dims.d_ffn;
    const std::int64_t history = f.lambda ? std::min(l, f.n_sink + f.window) : l;
    const std::int64_t keys = detail::visible_keys(l, f);

    StageRow qkvo{.kind = LinearKind::qkvo, .stage = Stage::decode, .traffic = {}};
    for (int m = 0; m < 4; ++m) qkvo.traffic += detail::matrix_traffic(d, d, f);
    qkvo.compute_cycles = 4 * detail::linear_cycles(1, d, d, RceMode::VM, f, cfg);
    qkvo.macs = layer_macs(LinearKind::qkvo, Stage::decode, dims, l);
    qkvo.memory_cycles = detail::to_cycles(qkvo.traffic.hbm(), cfg.hbm_bw_Bps, cfg);

    StageRow attn{.kind = LinearKind::attention, .stage = Stage::decode, .traffic = {}};
    attn.traffic.kv_read = detail::kv_bytes(history, dims, f);
    attn.traffic.kv_write = detail::kv_bytes(1, dims, f);
    attn.traffic.metadata = detail::kv_scale_bytes(history + 1, dims, f);
    const std::int64_t kp = detail::kv_pack(f);
    attn.compute_cycles = dims.h * (rce_cycles({1, dims.d_k, keys}, RceMode::VM, false, kp, cfg) +
                                    rce_cycles({1, keys, dims.d_k}, RceMode::VM, false, kp, cfg));
    attn.macs = 2 * keys * d;
    attn.memory_cycles = detail::to_cycles(attn.traffic.hbm(), cfg.hbm_bw_Bps, cfg);

    StageRow ffn{.kind = LinearKind::ffn, .stage = Stage::decode, .traffic = {}};
    ffn.traffic += detail::matrix_traffic(dff, d, f);
    ffn.traffic += detail::matrix_traffic(d, dff, f);
    ffn.compute_cycles = detail::linear_cycles(1, dff, d, RceMode::VM, f, cfg) +
                         detail::linear_cycles(1, d, dff, RceMode::VM, f, cfg);
    ffn.macs = layer_macs(LinearKind::ffn, Stage::decode, dims, l);
    ffn.memory_cycles = detail::to_cycles(ffn.traffic.hbm(), cfg.hbm_bw_Bps, cfg);

    for (std::int64_t layer = 0; layer < dims.n_layers; ++layer)
        for (StageRow r : {qkvo, attn, ffn}) {
            r.layer = layer;
            rep.rows.push_back(r);
        }
    return rep;
}

/// Off-chip bytes of an unfused attention: every head's l x l score matrix
/// written once and read back at `bytes_per_score`.
inline double unfused_intermediate_bytes(const ModelDims& dims, std::int64_t l, std::int64_t bytes_per_score = 2) {
    return 2.0 * static_cast<double>(l * l * dims.h * bytes_per_score);
}

/// Prefill of an l-token prompt: MM mode, weights from HBM once, prompt
/// activations over DDR, K/V written to HBM and re-read once per query tile
/// of T tokens. The fused attention pipeline keeps scores on chip; the
/// unfused variant spills them (written and read back at fp16).
inline CycleReport schedule_prefill(const ModelDims& dims, std::int64_t l, const CompressionFlags& f,
                                    const AcceleratorConfig& cfg) {
    dims.validate();
    f.validate();
    cfg.validate();
    if (l < 1) throw ConfigError("schedule_prefill: l must be >= 1");
    CycleReport rep;
    rep.stage = Stage::prefill;
    rep.l = l;
    rep.pack = pack_factor(pack_mode_for(f.weight_bits, f.packing));
    rep.clock_hz = cfg.clock_hz;
    rep.multipliers = cfg.multipliers();
    const std::int64_t d = dims.d, dff = dims.d_ffn;
    const bool md = f.include_metadata;
    auto memory = [&](const Traffic& t) {
        return std::max(detail::to_cycles(t.hbm(), cfg.hbm_bw_Bps, cfg), detail::to_cycles(t.ddr(), cfg.ddr_bw_Bps, cfg));
    };

    StageRow qkvo{.kind = LinearKind::qkvo, .stage = Stage::prefill, .traffic = {}};
    for (int m = 0; m < 4; ++m) qkvo.traffic += detail::matrix_traffic(d, d, f);
    qkvo.traffic.act_read = 2.0 * activation_bytes(l, d, f.act_bits, md);   // X, attention output
    qkvo.traffic.act_write = 2.0 * activation_bytes(l, d, f.act_bits, md);  // Q, projection output
    qkvo.traffic.kv_write = detail::kv_bytes(l, dims, f);
    qkvo.traffic.metadata += detail::kv_scale_bytes(l, dims, f);
    qkvo.compute_cycles = 4 * detail::linear_cycles(l, d, d, RceMode::MM, f, cfg);
    qkvo.macs = layer_macs(LinearKind::qkvo, Stage::prefill, dims, l);
    qkvo.memory_cycles = memory(qkvo.traffic);

    StageRow attn{.kind = LinearKind::attention, .stage = Stage::prefill, .traffic = {}};
    attn.traffic.act_read = activation_bytes(l, d, f.act_bits, md);
    attn.traffic.act_write = activation_bytes(l, d, f.act_bits, md);
    const std::int64_t kp = detail::kv_pack(f);
    std::int64_t macs = 0;
    for (std::int64_t q0 = 0; q0 < l; q0 += cfg.T) {
        const std::int64_t q1 = std::min(l, q0 + cfg.T);
        const std::int64_t nk = detail::tile_keys(q0, q1, f);
        attn.traffic.kv_read += detail::kv_bytes(nk, dims, f);
        attn.traffic.metadata += detail::kv_scale_bytes(nk, dims, f);
        attn.compute_cycles += dims.h * (rce_cycles({q1 - q0, dims.d_k, nk}, RceMode::MM, false, kp, cfg) +
                                         rce_cycles({q1 - q0, nk, dims.d_k}, RceMode::MM, false, kp, cfg));
        for (std::int64_t i = q0; i < q1; ++i) macs += 2 * detail::visible_keys(i, f) * d;
    }
    attn.macs = macs;
    if (!f.fused_attention) attn.traffic.intermediate = unfused_intermediate_bytes(dims, l);
    attn.memory_cycles = memory(attn.traffic);

    StageRow ffn{.kind = LinearKind::ffn, .stage = Stage::prefill, .traffic = {}};
    ffn.traffic += detail::matrix_traffic(dff, d, f);
    ffn.traffic += detail::matrix_traffic(d, dff, f);
    ffn.traffic.act_read = activation_bytes(l, d, f.act_bits, md);
    ffn.traffic.act_write = activation_bytes(l, d, f.act_bits, md) + activation_bytes(l, dff, f.act_bits, md);
    ffn.compute_cycles = detail::linear_cycles(l, dff, d, RceMode::MM, f, cfg) +
                         detail::linear_cycles(l, d, dff, RceMode::MM, f, cfg);
    ffn.macs = layer_macs(LinearKind::ffn, Stage::prefill, dims, l);
    ffn.memory_cycles = memory(ffn.traffic);

    for (std::int64_t layer = 0; layer < dims.n_layers; ++layer)
        for (StageRow r : {qkvo, attn, ffn}) {
            r.layer = layer;
            rep.rows.push_back(r);
        }
    return rep;
}

/// Average decode tokens/s while generating `out_tokens` after an
/// `in_tokens` prompt (prefill excluded).
inline double decode_throughput(const ModelDims& dims, const CompressionFlags& f, const AcceleratorConfig& cfg,
                                std::int64_t in_tokens, std::int64_t out_tokens) {
    if (in_tokens < 1 || out_tokens < 1) throw ConfigError("decode_throughput: token counts must be >= 1");
    double cycles = 0.0;
    for (std::int64_t i = 0; i < out_tokens; ++i) cycles += schedule_decode(dims, in_tokens + i, f, cfg).total_cycles();
    return static_cast<double>(out_tokens) * cfg.clock_hz / cycles;
}

// --------------------------------------------------------------- reporting

inline constexpr std::string_view kCyclesCsvHeader =
    "layer,kind,stage,compute_cycles,memory_cycles,stage_cycles,bytes_read,bytes_written,weight_bytes,"
    "metadata_bytes,index_bytes,lora_bytes,kv_read_bytes,kv_write_bytes,activation_bytes,intermediate_bytes,bound";

inline std::string fmt_num(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

/// One row per layer x kind x stage.
inline std::string cycles_csv(const CycleReport& rep) {
    std::string out = std::string(kCyclesCsvHeader) + "\n";
    for (const auto& r : rep.rows) {
        const auto& t = r.traffic;
        out += std::to_string(r.layer) + "," + std::string(to_string(r.kind)) + "," + std::string(to_string(r.stage)) +
               "," + std::to_string(r.compute_cycles) + "," + fmt_num(r.memory_cycles) + "," + fmt_num(r.stage_cycles()) +
               "," + fmt_num(r.bytes_read()) + "," + fmt_num(r.bytes_written()) + "," + fmt_num(t.weight) + "," +
               fmt_num(t.metadata) + "," + fmt_num(t.index) + "," + fmt_num(t.lora) + "," + fmt_num(t.kv_read) + "," +
               fmt_num(t.kv_write) + "," + fmt_num(t.activation()) + "," + fmt_num(t.intermediate) + "," +
               std::string(to_string(r.bound())) + "\n";
    }
    return out;
}

inline nlohmann::json traffic_json(const Traffic& t) {
    return {{"weight", t.weight},     {"metadata", t.metadata}, {"index", t.index},
            {"lora", t.lora},         {"kv_read", t.kv_read},   {"kv_write", t.kv_write},
            {"activation", t.activation()}, {"intermediate", t.intermediate}, {"total", t.total()}};
}

inline nlohmann::json summary_json(const CycleReport& rep) {
    nlohmann::json per_kind = nlohmann::json::object();
    for (auto k : kAllLinearKinds) {
        double cyc = 0.0, comp = 0.0, mem = 0.0;
        for (const auto& r : rep.rows)
            if (r.kind == k) {
                cyc += r.stage_cycles();
                comp += static_cast<double>(r.compute_cycles);
                mem += r.memory_cycles;
            }
        per_kind[std::string(to_string(k))] = {{"stage_cycles", cyc},
                                               {"compute_cycles", comp},
                                               {"memory_cycles", mem},
                                               {"traffic_bytes", traffic_json(rep.traffic(k))}};
    }
    return {{"stage", std::string(to_string(rep.stage))},
            {"l", rep.l},
            {"total_cycles", rep.total_cycles()},
            {"tokens_per_second", rep.tokens_per_second()},
            {"linear_utilization", rep.linear_utilization()},
            {"traffic_bytes", traffic_json(rep.traffic())},
            {"per_kind", per_kind}};
}

/// Human-readable per-stage traffic table, printed whenever a calibration
/// target is missed.
inline std::string traffic_breakdown(const CycleReport& rep) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "  per-token " << to_string(rep.stage) << " traffic at l=" << rep.l << " (MB, all layers):\n";
    os << "    kind          weight      meta     index      lora     kv_rd     kv_wr   act+int  compute_cyc   memory_cyc  bound\n";
    for (auto k : kAllLinearKinds) {
        const Traffic t = rep.traffic(k);
        double comp = 0.0, mem = 0.0;
        for (const auto& r : rep.rows)
            if (r.kind == k) {
                comp += static_cast<double>(r.compute_cycles);
                mem += r.memory_cycles;
            }
        os << "    " << std::left << std::setw(10) << to_string(k) << std::right << std::setw(10) << t.weight / 1e6
           << std::setw(10) << t.metadata / 1e6 << std::setw(10) << t.index / 1e6 << std::setw(10) << t.lora / 1e6
           << std::setw(10) << t.kv_read / 1e6 << std::setw(10) << t.kv_write / 1e6 << std::setw(10)
           << t.ddr() / 1e6 << std::setw(13) << std::setprecision(0) << comp << std::setw(13)
           << mem << "  " << (comp >= mem ? "compute" : "memory") << std::setprecision(2) << "\n";
    }
    os << "    total MB " << rep.traffic().total() / 1e6 << ", cycles " << std::setprecision(0) << rep.total_cycles()
       << ", tokens/s " << std::setprecision(1) << rep.tokens_per_second() << "\n";
    return os.str();
}

}  // namespace accllm::sim
