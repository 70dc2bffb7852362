// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "accllm/core/binary_io.hpp"
#include "accllm/core/matrix.hpp"
#include "accllm/core/model.hpp"

namespace accllm {

// Matrix fixture file: 16-byte header followed by rows*cols float64 values,
// all little-endian.
//   0  char[4] "ACLM"
//   4  u32     version (1)
//   8  u32     rows
//  12  u32     cols
inline constexpr std::string_view kFixtureMagic = "ACLM";
inline constexpr std::uint32_t kFixtureVersion = 1;

inline Bytes encode_matrix(const DenseMatrix& m) {
    ByteWriter w;
    w.raw(kFixtureMagic);
    w.u32(kFixtureVersion);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) w.f64(v);
    return w.take();
}

inline DenseMatrix decode_matrix(const Bytes& bytes) {
    ByteReader r(bytes);
    if (r.str(4) != kFixtureMagic) throw Error("fixture: bad magic");
    if (const auto version = r.u32(); version != kFixtureVersion)
        throw Error("fixture: unsupported version " + std::to_string(version));
    const std::size_t rows = r.u32();
    const std::size_t cols = r.u32();
    if (r.remaining() != rows * cols * 8) throw Error("fixture: payload size does not match header");
    std::vector<double> data(rows * cols);
    for (double& v : data) v = r.f64();
    return DenseMatrix(rows, cols, std::move(data));
}

inline void save_matrix(const std::filesystem::path& path, const DenseMatrix& m) {
    write_file_atomic(path, encode_matrix(m));
}

inline DenseMatrix load_matrix(const std::filesystem::path& path) { return decode_matrix(read_file(path)); }

/// Writes every synthesized matrix as layer<i>_<name>.aclm under `dir`.
inline std::vector<std::filesystem::path> save_model_fixtures(const std::filesystem::path& dir,
                                                              const std::vector<LayerWeights>& layers) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& w = layers[i];
        const std::pair<const char*, const DenseMatrix*> named[] = {
            {"wq", &w.wq}, {"wk", &w.wk}, {"wv", &w.wv}, {"wo", &w.wo}, {"wa", &w.wa}, {"wb", &w.wb}};
        for (const auto& [name, m] : named) {
            auto path = dir / ("layer" + std::to_string(i) + "_" + name + ".aclm");
            save_matrix(path, *m);
            written.push_back(std::move(path));
        }
    }
    return written;
}

inline ModelDims load_dims(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    return nlohmann::json::parse(in).get<ModelDims>();
}

}  // namespace accllm
