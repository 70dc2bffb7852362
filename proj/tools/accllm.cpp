// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// accllm: compression, attention and accelerator scenarios as CSV/JSON reports.
//
// Exit status: 0 when every embedded check passes, 1 when one fails, 2 when
// the scenario or the command line is invalid (no outputs are written then).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "accllm/cli/layouts.hpp"
#include "accllm/cli/run.hpp"
#include "accllm/cli/scenario.hpp"

namespace {

using namespace accllm;
using namespace accllm::cli;

constexpr int kExitFail = 1;
constexpr int kExitInvalid = 2;

struct ScenarioOptions {
    std::optional<std::string> preset, spec_file, name, dims, accel, stage, lengths;
    std::optional<int> w_bits, a_bits, kv_bits;
    std::optional<std::int64_t> lora_rank, n_sink, window, in_tokens, out_tokens;
    std::optional<bool> prune, lambda, packing, fused;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> checks;
    std::string out_dir;
};

void add_scenario_options(CLI::App* cmd, ScenarioOptions& o) {
    cmd->add_option("--preset", o.preset, "named scenario")->check(CLI::IsMember(preset_names()));
    cmd->add_option("--spec", o.spec_file, "JSON scenario; its fields override the flags");
    cmd->add_option("--name", o.name, "scenario name");
    cmd->add_option("--dims", o.dims, "model preset: llama2-7b, tiny, toy");
    cmd->add_option("--accel", o.accel, "accelerator preset: u280");
    cmd->add_option("--stage", o.stage, "prefill, decode or both");
    cmd->add_option("--l", o.lengths, "sequence lengths: 256..4096 (doubling) or 128,512");
    cmd->add_option("--w-bits", o.w_bits, "weight bits");
    cmd->add_option("--a-bits", o.a_bits, "activation bits");
    cmd->add_option("--kv-bits", o.kv_bits, "KV cache bits");
    cmd->add_option("--lora-rank", o.lora_rank, "LoRA rank, 0 disables");
    cmd->add_option("--n-sink", o.n_sink, "Lambda sink tokens");
    cmd->add_option("--window", o.window, "Lambda window");
    cmd->add_option("--in-tokens", o.in_tokens, "prompt tokens of the throughput workload");
    cmd->add_option("--out-tokens", o.out_tokens, "generated tokens of the throughput workload");
    cmd->add_flag("--prune,!--no-prune", o.prune, "2:4 pruning");
    cmd->add_flag("--lambda,!--no-lambda", o.lambda, "Lambda-shaped KV cache");
    cmd->add_flag("--packing,!--no-packing", o.packing, "DSP packing");
    cmd->add_flag("--fused,!--no-fused", o.fused, "fused attention");
    cmd->add_option("--seeds", o.seeds, "seeds for the functional check")->delimiter(',');
    cmd->add_option("--check", o.checks, "embedded check to run (repeatable)");
    cmd->add_option("--out-dir", o.out_dir, "output directory (default: $ACCLLM_OUT_DIR or ./accllm_out)");
}

ScenarioSpec build_spec(const ScenarioOptions& o) {
    ScenarioSpec s = o.preset ? scenario_preset(*o.preset) : ScenarioSpec{};
    if (o.name) s.name = *o.name;
    if (o.dims) {
        s.dims_preset = *o.dims;
        s.dims = dims_preset(*o.dims);
    }
    if (o.accel) {
        s.accel_preset = *o.accel;
        s.accel = sim::accelerator_preset(*o.accel);
    }
    auto& f = s.flags;
    if (o.w_bits) f.weight_bits = *o.w_bits;
    if (o.a_bits) f.act_bits = *o.a_bits;
    if (o.kv_bits) f.kv_bits = *o.kv_bits;
    if (o.lora_rank) f.lora_rank = *o.lora_rank;
    if (o.n_sink) f.n_sink = *o.n_sink;
    if (o.window) f.window = *o.window;
    if (o.prune) f.prune = *o.prune;
    if (o.lambda) f.lambda = *o.lambda;
    if (o.packing) f.packing = *o.packing;
    if (o.fused) f.fused_attention = *o.fused;
    if (o.in_tokens) s.workload.in_tokens = *o.in_tokens;
    if (o.out_tokens) s.workload.out_tokens = *o.out_tokens;
    if (o.lengths) s.lengths = parse_lengths(*o.lengths);
    if (!o.seeds.empty()) s.seeds = o.seeds;
    if (!o.checks.empty()) {
        s.checks.clear();
        for (const auto& c : o.checks) s.checks.push_back(check_from(c));
    }
    nlohmann::json over = nlohmann::json::object();
    if (o.stage) over["stage"] = *o.stage;
    if (o.spec_file) {
        if (!std::filesystem::is_regular_file(*o.spec_file)) throw ConfigError("spec file not found: " + *o.spec_file);
        const Bytes raw = read_file(*o.spec_file);
        const auto j = nlohmann::json::parse(raw.begin(), raw.end(), nullptr, false);
        if (j.is_discarded()) throw ConfigError("spec file is not valid JSON: " + *o.spec_file);
        if (!j.is_object()) throw ConfigError("spec must be a JSON object");
        over.update(j);
    }
    return spec_from_json(over, std::move(s));
}

std::filesystem::path out_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("ACCLLM_OUT_DIR"); env && *env) return env;
    return "accllm_out";
}

int invalid(const std::string& msg) {
    std::cerr << nlohmann::json{{"error", "invalid_spec"}, {"message", msg}}.dump() << "\n";
    return kExitInvalid;
}

void print_checks(const Bundle& b) {
    for (const auto& c : b.checks) std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    if (!b.diagnostics.empty()) std::cerr << b.diagnostics;
}

int cmd_run(const ScenarioOptions& o) {
    const ScenarioSpec s = build_spec(o);
    const Bundle b = run_scenario(s);
    const auto dir = out_dir(o.out_dir);
    write_bundle(b, dir);
    print_checks(b);
    std::cout << "wrote " << b.files.size() << " files to " << dir.string() << "\n";
    return b.exit_code();
}

int cmd_emit(const ScenarioOptions& o, const std::string& figure, bool to_stdout) {
    const std::string csv = emit_figure(build_spec(o), figure);
    if (to_stdout) {
        std::cout << csv;
        return 0;
    }
    const auto dir = out_dir(o.out_dir);
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / (figure + ".csv"), csv);
    std::cout << "wrote " << (dir / (figure + ".csv")).string() << "\n";
    return 0;
}

int cmd_ablate(const ScenarioOptions& o) {
    const ScenarioSpec s = build_spec(o);
    const auto res = run_ablation(s);
    const auto dir = out_dir(o.out_dir);
    Bundle b;
    b.files["ablation.csv"] = sim::ablation_csv(res);
    b.files["ablation.json"] = sim::ablation_json(res).dump(2) + "\n";
    write_bundle(b, dir);
    std::cout << b.files["ablation.csv"];
    if (!res.pass()) {
        std::cerr << "ablation outside tolerance; per-scenario decode traffic:\n";
        for (const auto& sc : sim::default_ablation())
            std::cerr << "[" << sc.name << "]\n" << sim::traffic_breakdown(cli::detail::mid_decode(s, sc.flags));
    }
    return res.pass() ? 0 : kExitFail;
}

int cmd_verify(const std::optional<std::string>& file, bool corrupt, bool x_zero, const std::string& out_flag) {
    auto layouts = file ? load_layouts(*file) : default_layouts();
    if (corrupt) layouts.push_back(corrupted_layout());
    const auto rep = verify_layouts(layouts, x_zero);
    for (std::size_t i = 0; i < rep.results.size(); ++i) {
        const auto& r = rep.results[i];
        std::cout << (r.pass() ? "PASS " : "FAIL ") << sim::to_string(r.mode) << " hash=" << rep.layouts[i].hash()
                  << " cases=" << r.cases << " mismatches=" << r.mismatches;
        if (r.counterexample) std::cout << " counterexample=" << nlohmann::json(*r.counterexample).dump();
        std::cout << "\n";
    }
    const auto dir = out_dir(out_flag);
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "layouts.json", layout_report_json(rep).dump(2) + "\n");
    return rep.pass() ? 0 : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"accllm: compressed-LLM accelerator scenarios"};
    app.require_subcommand(1);

    ScenarioOptions run_o, emit_o, ablate_o;
    auto* run = app.add_subcommand("run", "run a scenario and write breakdown/roofline/cycles/summary");
    add_scenario_options(run, run_o);

    auto* emit = app.add_subcommand("emit", "emit one figure's CSV");
    add_scenario_options(emit, emit_o);
    std::string figure;
    bool to_stdout = false;
    emit->add_option("--figure", figure, "figure id")->required()->check(CLI::IsMember(figure_ids()));
    emit->add_flag("--stdout", to_stdout, "print instead of writing <figure>.csv");

    auto* ablate = app.add_subcommand("ablate", "cumulative compression ablation");
    add_scenario_options(ablate, ablate_o);

    auto* verify = app.add_subcommand("verify-layouts", "exhaustive DSP packing layout sweeps");
    std::optional<std::string> layout_file;
    bool corrupt = false, x_zero = false;
    std::string verify_out;
    verify->add_option("--layouts", layout_file, "layout JSON (default: built-in layouts)");
    verify->add_flag("--corrupt", corrupt, "also sweep a deliberately overlapping pack2 layout");
    verify->add_flag("--x-zero", x_zero, "restrict activations to 0");
    verify->add_option("--out-dir", verify_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return invalid(e.what());
    }

    try {
        if (*run) return cmd_run(run_o);
        if (*emit) return cmd_emit(emit_o, figure, to_stdout);
        if (*ablate) return cmd_ablate(ablate_o);
        if (*verify) return cmd_verify(layout_file, corrupt, x_zero, verify_out);
    } catch (const ConfigError& e) {
        return invalid(e.what());
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", "runtime"}, {"message", e.what()}}.dump() << "\n";
        return kExitFail;
    }
    return kExitInvalid;
}
