// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "accllm/attention/lambda_mask.hpp"
#include "accllm/compress/quantize.hpp"
#include "accllm/core/binary_io.hpp"
#include "accllm/core/common.hpp"
#include "accllm/core/matrix.hpp"

namespace accllm::attn {

/// Sink + sliding-window KV store with symmetric low-bit codes and one scale
/// per (token, head). The first `n_sink` tokens ever appended are pinned; the
/// remaining capacity is a ring of the `window` most recent tokens.
class LambdaKvCache {
public:
    LambdaKvCache(std::size_t heads, std::size_t d_k, std::size_t n_sink = kDefaultSinks,
                  std::size_t window = kDefaultWindow, int kv_bits = 4)
        : heads_(heads), d_k_(d_k), n_sink_(n_sink), window_(window), bits_(kv_bits) {
        if (heads == 0 || d_k == 0) throw ConfigError("LambdaKvCache: heads and d_k must be >= 1");
        if (window == 0) throw ConfigError("LambdaKvCache: window must be >= 1");
        if (kv_bits != 4 && kv_bits != 8) throw ConfigError("LambdaKvCache: kv_bits must be 4 or 8");
        const std::size_t cap = capacity();
        positions_.assign(cap, -1);
        k_codes_.assign(cap * width(), 0);
        v_codes_.assign(cap * width(), 0);
        k_scales_.assign(cap * heads_, 0.0);
        v_scales_.assign(cap * heads_, 0.0);
    }

    std::size_t heads() const { return heads_; }
    std::size_t d_k() const { return d_k_; }
    std::size_t width() const { return heads_ * d_k_; }
    std::size_t n_sink() const { return n_sink_; }
    std::size_t window() const { return window_; }
    int kv_bits() const { return bits_; }
    std::size_t capacity() const { return n_sink_ + window_; }
    std::size_t size() const { return sinks_ + ring_count_; }
    bool empty() const { return size() == 0; }

    /// Quantizes and stores one token. Returns the evicted position, if any.
    std::optional<std::int64_t> append(std::span<const double> k_row, std::span<const double> v_row,
                                       std::int64_t position) {
        require(k_row.size() == width() && v_row.size() == width(), "cache_append: row width must be h * d_k");
        if (position < 0 || (last_ && position <= *last_))
            throw Error("cache_append: positions must be non-negative and strictly increasing");
        last_ = position;
        std::optional<std::int64_t> evicted;
        std::size_t slot;
        if (sinks_ < n_sink_) {
            slot = sinks_++;
        } else if (ring_count_ < window_) {
            slot = n_sink_ + (ring_head_ + ring_count_) % window_;
            ++ring_count_;
        } else {
            slot = n_sink_ + ring_head_;
            evicted = positions_[slot];
            ring_head_ = (ring_head_ + 1) % window_;
        }
        positions_[slot] = position;
        store(k_row, k_codes_, k_scales_, slot);
        store(v_row, v_codes_, v_scales_, slot);
        return evicted;
    }

    /// Storage slot of the i-th retained token in ascending position order.
    std::size_t slot(std::size_t i) const {
        if (i < sinks_) return i;
        return n_sink_ + (ring_head_ + (i - sinks_)) % window_;
    }

    std::int64_t position(std::size_t i) const { return positions_[slot(i)]; }

    std::vector<std::int64_t> positions() const {
        std::vector<std::int64_t> out;
        out.reserve(size());
        for (std::size_t i = 0; i < size(); ++i) out.push_back(position(i));
        return out;
    }

    /// Integer K/V codes and scales of the i-th retained token, head `h`.
    std::span<const std::int8_t> k_codes(std::size_t i, std::size_t h) const {
        return {k_codes_.data() + slot(i) * width() + h * d_k_, d_k_};
    }
    std::span<const std::int8_t> v_codes(std::size_t i, std::size_t h) const {
        return {v_codes_.data() + slot(i) * width() + h * d_k_, d_k_};
    }
    double k_scale(std::size_t i, std::size_t h) const { return k_scales_[slot(i) * heads_ + h]; }
    double v_scale(std::size_t i, std::size_t h) const { return v_scales_[slot(i) * heads_ + h]; }

    /// Dequantized K or V of all retained tokens, size() x width().
    DenseMatrix dequant_keys() const { return dequant(k_codes_, k_scales_); }
    DenseMatrix dequant_values() const { return dequant(v_codes_, v_scales_); }

    /// Bytes held: codes at kv_bits plus one scale per (token, head) for K and V.
    std::int64_t code_bytes() const { return static_cast<std::int64_t>(2 * size() * width()) * bits_ / 8; }
    std::int64_t scale_bytes(std::int64_t bytes_per_scale = 2) const {
        return static_cast<std::int64_t>(2 * size() * heads_) * bytes_per_scale;
    }

    /// Snapshot: u32 header length, JSON header, then int8 K codes and V codes
    /// of every retained token in position order.
    Bytes dump() const {
        nlohmann::json hdr = {{"format", "accllm-kv-snapshot"},
                              {"version", 1},
                              {"heads", heads_},
                              {"d_k", d_k_},
                              {"n_sink", n_sink_},
                              {"window", window_},
                              {"kv_bits", bits_},
                              {"last_position", last_ ? *last_ : -1}};
        std::vector<std::int64_t> pos;
        std::vector<double> ks, vs;
        for (std::size_t i = 0; i < size(); ++i) {
            pos.push_back(position(i));
            for (std::size_t h = 0; h < heads_; ++h) {
                ks.push_back(k_scale(i, h));
                vs.push_back(v_scale(i, h));
            }
        }
        hdr["positions"] = pos;
        hdr["k_scales"] = ks;
        hdr["v_scales"] = vs;
        const std::string text = hdr.dump();
        ByteWriter w;
        w.u32(static_cast<std::uint32_t>(text.size()));
        w.raw(text);
        for (const auto* codes : {&k_codes_, &v_codes_})
            for (std::size_t i = 0; i < size(); ++i)
                for (std::size_t c = 0; c < width(); ++c) w.i8((*codes)[slot(i) * width() + c]);
        return w.take();
    }

    static LambdaKvCache load(const Bytes& bytes) {
        ByteReader r(bytes);
        const std::uint32_t len = r.u32();
        nlohmann::json hdr;
        try {
            hdr = nlohmann::json::parse(r.str(len));
        } catch (const nlohmann::json::exception& e) {
            throw Error(std::string("kv snapshot: bad header: ") + e.what());
        }
        if (hdr.value("format", "") != "accllm-kv-snapshot" || hdr.value("version", 0) != 1)
            throw Error("kv snapshot: unsupported format");
        LambdaKvCache c(hdr.at("heads").get<std::size_t>(), hdr.at("d_k").get<std::size_t>(),
                        hdr.at("n_sink").get<std::size_t>(), hdr.at("window").get<std::size_t>(),
                        hdr.at("kv_bits").get<int>());
        const auto pos = hdr.at("positions").get<std::vector<std::int64_t>>();
        const auto ks = hdr.at("k_scales").get<std::vector<double>>();
        const auto vs = hdr.at("v_scales").get<std::vector<double>>();
        if (pos.size() > c.capacity() || ks.size() != pos.size() * c.heads_ || vs.size() != ks.size())
            throw Error("kv snapshot: inconsistent header");
        if (r.remaining() != 2 * pos.size() * c.width()) throw Error("kv snapshot: payload size mismatch");
        // Retained tokens are restored in order: sinks first, then the ring from slot 0.
        c.sinks_ = std::min(pos.size(), c.n_sink_);
        c.ring_count_ = pos.size() - c.sinks_;
        c.ring_head_ = 0;
        for (std::size_t i = 0; i < pos.size(); ++i) {
            if (i > 0 && pos[i] <= pos[i - 1]) throw Error("kv snapshot: positions must increase");
            c.positions_[c.slot(i)] = pos[i];
            for (std::size_t h = 0; h < c.heads_; ++h) {
                c.k_scales_[c.slot(i) * c.heads_ + h] = ks[i * c.heads_ + h];
                c.v_scales_[c.slot(i) * c.heads_ + h] = vs[i * c.heads_ + h];
            }
        }
        for (auto* codes : {&c.k_codes_, &c.v_codes_})
            for (std::size_t i = 0; i < pos.size(); ++i)
                for (std::size_t col = 0; col < c.width(); ++col) (*codes)[c.slot(i) * c.width() + col] = r.i8();
        const auto last = hdr.at("last_position").get<std::int64_t>();
        if (last >= 0) c.last_ = last;
        return c;
    }

    bool operator==(const LambdaKvCache& o) const {
        if (heads_ != o.heads_ || d_k_ != o.d_k_ || n_sink_ != o.n_sink_ || window_ != o.window_ || bits_ != o.bits_ ||
            size() != o.size() || last_ != o.last_)
            return false;
        for (std::size_t i = 0; i < size(); ++i) {
            if (position(i) != o.position(i)) return false;
            for (std::size_t h = 0; h < heads_; ++h) {
                if (k_scale(i, h) != o.k_scale(i, h) || v_scale(i, h) != o.v_scale(i, h)) return false;
                for (std::size_t c = 0; c < d_k_; ++c)
                    if (k_codes(i, h)[c] != o.k_codes(i, h)[c] || v_codes(i, h)[c] != o.v_codes(i, h)[c]) return false;
            }
        }
        return true;
    }

private:
    void store(std::span<const double> row, std::vector<std::int8_t>& codes, std::vector<double>& scales,
               std::size_t slot) {
        const DenseMatrix m(1, width(), std::vector<double>(row.begin(), row.end()));
        const QuantTensor q = compress::quant_kv(m, bits_, heads_);
        for (std::size_t c = 0; c < width(); ++c) codes[slot * width() + c] = static_cast<std::int8_t>(q.values[c]);
        for (std::size_t h = 0; h < heads_; ++h) scales[slot * heads_ + h] = q.scales[h];
    }

    DenseMatrix dequant(const std::vector<std::int8_t>& codes, const std::vector<double>& scales) const {
        DenseMatrix m(size(), width());
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t c = 0; c < width(); ++c)
                m(i, c) = scales[slot(i) * heads_ + c / d_k_] * codes[slot(i) * width() + c];
        return m;
    }

    std::size_t heads_, d_k_, n_sink_, window_;
    int bits_;
    std::size_t sinks_ = 0;
    std::size_t ring_head_ = 0;
    std::size_t ring_count_ = 0;
    std::optional<std::int64_t> last_;
    std::vector<std::int64_t> positions_;
    std::vector<std::int8_t> k_codes_, v_codes_;
    std::vector<double> k_scales_, v_scales_;
};

/// Free-function form of LambdaKvCache::append.
inline std::optional<std::int64_t> cache_append(LambdaKvCache& cache, std::span<const double> k_row,
                                                std::span<const double> v_row, std::int64_t position) {
    return cache.append(k_row, v_row, position);
}

}  // namespace accllm::attn
