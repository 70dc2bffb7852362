// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "accllm/compress/compressed_linear.hpp"
#include "accllm/core/binary_io.hpp"
#include "accllm/core/common.hpp"

namespace accllm::compress {

// Compressed-artifact container, little-endian:
//   0  char[4] "ACLC"
//   4  u32     version (1)
//   8  u32     manifest length n
//  12  char[n] JSON manifest
//  ..          section payloads, back to back
// The manifest lists every layer's shapes and every section's offset (from
// the first payload byte), size and crc32. Integer codes are bit-packed at
// their native width, offset by qmin so they are non-negative.
inline constexpr std::string_view kContainerMagic = "ACLC";
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedLayer {
    std::string name;
    CompressedLinear layer;

    bool operator==(const NamedLayer& o) const {
        return name == o.name && layer.in_features == o.layer.in_features && layer.in_padded == o.layer.in_padded &&
               layer.out_features == o.layer.out_features && layer.act_bits == o.layer.act_bits &&
               layer.pattern == o.layer.pattern && layer.weight == o.layer.weight &&
               layer.lora.has_value() == o.layer.lora.has_value() &&
               (!layer.lora || (layer.lora->a == o.layer.lora->a && layer.lora->bt == o.layer.lora->bt));
    }
};

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
    return static_cast<std::uint32_t>(::crc32(0L, data, static_cast<uInt>(n)));
}
inline std::uint32_t crc32_of(const Bytes& b) { return crc32_of(b.data(), b.size()); }
inline std::uint32_t crc32_of(std::string_view s) {
    return crc32_of(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

namespace detail {

inline Bytes pack_codes(const QuantTensor& q) {
    const int bits = q.bits;
    Bytes out((q.values.size() * static_cast<std::size_t>(bits) + 7) / 8, 0);
    for (std::size_t i = 0; i < q.values.size(); ++i) {
        const auto u = static_cast<std::uint32_t>(q.values[i] - q.qmin());
        const std::size_t bit = i * static_cast<std::size_t>(bits);
        out[bit / 8] |= static_cast<std::uint8_t>(u << (bit % 8));
    }
    return out;
}

inline void unpack_codes(const Bytes& b, QuantTensor& q) {
    const auto bits = static_cast<std::size_t>(q.bits);
    if (b.size() != (q.rows * q.cols * bits + 7) / 8) throw Error("container: code section size mismatch");
    q.values.resize(q.rows * q.cols);
    const std::uint32_t mask = (1u << bits) - 1u;
    for (std::size_t i = 0; i < q.values.size(); ++i) {
        const std::size_t bit = i * bits;
        q.values[i] = static_cast<std::int32_t>((b[bit / 8] >> (bit % 8)) & mask) + q.qmin();
    }
}

inline Bytes f64_bytes(const std::vector<double>& v) {
    ByteWriter w;
    for (double x : v) w.f64(x);
    return w.take();
}

inline Bytes zero_bytes(const std::vector<std::int32_t>& z) {
    Bytes out;
    for (auto v : z) out.push_back(static_cast<std::uint8_t>(v));
    return out;
}

inline nlohmann::json tensor_meta(const QuantTensor& q) {
    return {{"bits", q.bits},
            {"scheme", std::string(to_string(q.scheme))},
            {"group_size", q.group_size},
            {"rows", q.rows},
            {"cols", q.cols}};
}

inline QuantScheme scheme_from(const std::string& s) {
    for (auto sc : {QuantScheme::group_asymmetric, QuantScheme::per_token_asymmetric,
                    QuantScheme::per_token_per_head_symmetric})
        if (to_string(sc) == s) return sc;
    throw Error("container: unknown quant scheme " + s);
}

class SectionWriter {
public:
    void add(const std::string& name, Bytes data) {
        sections_.push_back({{"name", name}, {"offset", payload_.size()}, {"size", data.size()}, {"crc32", crc32_of(data)}});
        payload_.insert(payload_.end(), data.begin(), data.end());
    }
    void add_tensor(const std::string& prefix, const QuantTensor& q) {
        add(prefix + ".codes", pack_codes(q));
        add(prefix + ".scales", f64_bytes(q.scales));
        if (!q.symmetric()) add(prefix + ".zeros", zero_bytes(q.zero_points));
    }
    nlohmann::json sections() const { return sections_; }
    const Bytes& payload() const { return payload_; }

private:
    nlohmann::json sections_ = nlohmann::json::array();
    Bytes payload_;
};

class SectionReader {
public:
    SectionReader(const Bytes& file, std::size_t base, const nlohmann::json& sections) {
        for (const auto& s : sections) {
            const auto off = s.at("offset").get<std::size_t>();
            const auto size = s.at("size").get<std::size_t>();
            if (base + off + size > file.size()) throw Error("container: section out of bounds");
            Bytes data(file.begin() + static_cast<std::ptrdiff_t>(base + off),
                       file.begin() + static_cast<std::ptrdiff_t>(base + off + size));
            const auto name = s.at("name").get<std::string>();
            if (crc32_of(data) != s.at("crc32").get<std::uint32_t>()) throw Error("container: checksum mismatch in " + name);
            data_[name] = std::move(data);
        }
    }
    const Bytes& get(const std::string& name) const {
        const auto it = data_.find(name);
        if (it == data_.end()) throw Error("container: missing section " + name);
        return it->second;
    }
    QuantTensor tensor(const std::string& prefix, const nlohmann::json& meta) const {
        QuantTensor q;
        q.bits = meta.at("bits").get<int>();
        q.scheme = scheme_from(meta.at("scheme").get<std::string>());
        q.group_size = meta.at("group_size").get<std::size_t>();
        q.rows = meta.at("rows").get<std::size_t>();
        q.cols = meta.at("cols").get<std::size_t>();
        if (q.bits != 2 && q.bits != 4 && q.bits != 8) throw Error("container: bad bit width");
        if (q.group_size == 0) throw Error("container: bad group size");
        unpack_codes(get(prefix + ".codes"), q);
        const auto& sc = get(prefix + ".scales");
        if (sc.size() != 8 * q.rows * q.groups_per_row()) throw Error("container: scale section size mismatch");
        ByteReader r(sc);
        q.scales.resize(q.rows * q.groups_per_row());
        for (double& s : q.scales) s = r.f64();
        if (!q.symmetric()) {
            const auto& z = get(prefix + ".zeros");
            if (z.size() != q.scales.size()) throw Error("container: zero-point section size mismatch");
            q.zero_points.assign(z.begin(), z.end());
        }
        q.validate();
        return q;
    }

private:
    std::map<std::string, Bytes> data_;
};

}  // namespace detail

inline Bytes encode_container(const std::vector<NamedLayer>& layers) {
    detail::SectionWriter sw;
    nlohmann::json meta = nlohmann::json::array();
    for (const auto& [name, layer] : layers) {
        layer.validate();
        nlohmann::json m = {{"name", name},
                            {"in_features", layer.in_features},
                            {"in_padded", layer.in_padded},
                            {"out_features", layer.out_features},
                            {"act_bits", layer.act_bits},
                            {"sparse", layer.sparse()},
                            {"weight", detail::tensor_meta(layer.weight)}};
        if (layer.pattern) sw.add(name + ".indices", layer.pattern->codes());
        sw.add_tensor(name + ".weight", layer.weight);
        if (layer.lora) {
            m["lora_a"] = detail::tensor_meta(layer.lora->a);
            m["lora_bt"] = detail::tensor_meta(layer.lora->bt);
            sw.add_tensor(name + ".lora_a", layer.lora->a);
            sw.add_tensor(name + ".lora_bt", layer.lora->bt);
        }
        meta.push_back(std::move(m));
    }
    const nlohmann::json manifest = {{"format", "accllm-compressed"}, {"layers", meta}, {"sections", sw.sections()}};
    const std::string text = manifest.dump();
    ByteWriter w;
    w.raw(kContainerMagic);
    w.u32(kContainerVersion);
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.raw(text);
    w.raw(sw.payload());
    return w.take();
}

/// Parses and checksum-verifies a container. Throws Error on any corruption.
inline std::vector<NamedLayer> decode_container(const Bytes& bytes) {
    ByteReader r(bytes);
    if (r.str(4) != kContainerMagic) throw Error("container: bad magic");
    if (const auto v = r.u32(); v != kContainerVersion) throw Error("container: unsupported version " + std::to_string(v));
    const std::uint32_t len = r.u32();
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(r.str(len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("container: bad manifest: ") + e.what());
    }
    try {
        const detail::SectionReader sr(bytes, r.position(), manifest.at("sections"));
        std::vector<NamedLayer> out;
        for (const auto& m : manifest.at("layers")) {
            NamedLayer nl;
            nl.name = m.at("name").get<std::string>();
            auto& L = nl.layer;
            L.in_features = m.at("in_features").get<std::size_t>();
            L.in_padded = m.at("in_padded").get<std::size_t>();
            L.out_features = m.at("out_features").get<std::size_t>();
            L.act_bits = m.at("act_bits").get<int>();
            L.weight = sr.tensor(nl.name + ".weight", m.at("weight"));
            if (m.at("sparse").get<bool>()) {
                if (L.in_padded % kBlock != 0) throw Error("container: sparse width not a multiple of 4");
                SparsePattern24 p(L.out_features, L.in_padded);
                const auto& idx = sr.get(nl.name + ".indices");
                if (idx.size() != p.codes().size()) throw Error("container: index section size mismatch");
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    const unsigned a = idx[i] & 3u, b = (idx[i] >> 2) & 3u;
                    if (!(a < b) || (idx[i] >> 4) != 0) throw Error("container: malformed 2:4 index");
                    p.codes()[i] = idx[i];
                }
                L.pattern = std::move(p);
            }
            if (m.contains("lora_a"))
                L.lora = QuantLoraPair{sr.tensor(nl.name + ".lora_a", m.at("lora_a")),
                                       sr.tensor(nl.name + ".lora_bt", m.at("lora_bt"))};
            L.validate();
            out.push_back(std::move(nl));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("container: bad manifest: ") + e.what());
    }
}

inline void save_container(const std::filesystem::path& path, const std::vector<NamedLayer>& layers) {
    write_file_atomic(path, encode_container(layers));
}

inline std::vector<NamedLayer> load_container(const std::filesystem::path& path) {
    return decode_container(read_file(path));
}

}  // namespace accllm::compress
