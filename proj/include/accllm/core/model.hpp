// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "accllm/core/common.hpp"
#include "accllm/core/matrix.hpp"
#include "accllm/core/rng.hpp"

namespace accllm {

/// Transformer geometry. Vocabulary and embeddings are not modeled.
struct ModelDims {
    std::int64_t n_layers = 1;
    std::int64_t d = 8;
    std::int64_t h = 2;
    std::int64_t d_k = 4;
    std::int64_t d_ffn = 16;

    static constexpr ModelDims llama2_7b() { return {32, 4096, 32, 128, 11008}; }
    static constexpr ModelDims tiny() { return {1, 8, 2, 4, 16}; }

    void validate() const {
        if (n_layers < 1 || d < 1 || h < 1 || d_k < 1 || d_ffn < 1)
            throw ConfigError("ModelDims: every field must be >= 1");
        if (d != h * d_k) throw ConfigError("ModelDims: d must equal h * d_k");
    }

    bool operator==(const ModelDims&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelDims& m) {
    j = {{"n_layers", m.n_layers}, {"d", m.d}, {"h", m.h}, {"d_k", m.d_k}, {"d_ffn", m.d_ffn}};
}

inline void from_json(const nlohmann::json& j, ModelDims& m) {
    j.at("n_layers").get_to(m.n_layers);
    j.at("d").get_to(m.d);
    j.at("h").get_to(m.h);
    j.at("d_k").get_to(m.d_k);
    j.at("d_ffn").get_to(m.d_ffn);
    m.validate();
}

/// Named presets accepted by configs and the CLI.
inline ModelDims dims_preset(std::string_view name) {
    if (name == "llama2-7b") return ModelDims::llama2_7b();
    if (name == "tiny") return ModelDims::tiny();
    if (name == "toy") return {2, 32, 4, 8, 64};
    throw ConfigError("unknown model preset: " + std::string(name));
}

/// The three rows of the linear-operation complexity table.
enum class LinearKind { qkvo, attention, ffn };

inline constexpr std::array<LinearKind, 3> kAllLinearKinds = {LinearKind::qkvo, LinearKind::attention,
                                                             LinearKind::ffn};

inline constexpr std::string_view to_string(LinearKind k) {
    switch (k) {
        case LinearKind::qkvo: return "qkvo";
        case LinearKind::attention: return "attention";
        case LinearKind::ffn: return "ffn";
    }
    return "?";
}

enum class Stage { prefill, decode };

inline constexpr std::string_view to_string(Stage s) { return s == Stage::prefill ? "prefill" : "decode"; }

/// Per-layer weights in X*W orientation: every matrix is d_in x d_out.
struct LayerWeights {
    DenseMatrix wq, wk, wv, wo;  // d x d
    DenseMatrix wa;              // d x d_ffn
    DenseMatrix wb;              // d_ffn x d
};

/// Reproducible zero-mean Gaussian weights with standard deviation 1/sqrt(d).
inline std::vector<LayerWeights> synth_model(std::uint64_t seed, const ModelDims& dims) {
    dims.validate();
    Rng rng(seed);
    const double sd = 1.0 / std::sqrt(static_cast<double>(dims.d));
    const auto d = static_cast<std::size_t>(dims.d);
    const auto f = static_cast<std::size_t>(dims.d_ffn);
    std::vector<LayerWeights> layers;
    layers.reserve(static_cast<std::size_t>(dims.n_layers));
    for (std::int64_t l = 0; l < dims.n_layers; ++l) {
        LayerWeights w;
        w.wq = DenseMatrix::gaussian(d, d, rng, sd);
        w.wk = DenseMatrix::gaussian(d, d, rng, sd);
        w.wv = DenseMatrix::gaussian(d, d, rng, sd);
        w.wo = DenseMatrix::gaussian(d, d, rng, sd);
        w.wa = DenseMatrix::gaussian(d, f, rng, sd);
        w.wb = DenseMatrix::gaussian(f, d, rng, sd);
        layers.push_back(std::move(w));
    }
    return layers;
}

}  // namespace accllm
