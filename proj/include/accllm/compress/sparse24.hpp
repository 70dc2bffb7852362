// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "accllm/core/common.hpp"
#include "accllm/core/matrix.hpp"

namespace accllm::compress {

inline constexpr std::size_t kBlock = 4;
inline constexpr std::size_t kKeep = 2;

/// Retained positions of a 2:4 matrix. Each block of 4 input columns keeps
/// exactly two positions, encoded in one byte as first | second << 2.
class SparsePattern24 {
public:
    SparsePattern24() = default;
    SparsePattern24(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), codes_(rows * (cols / kBlock)) {
        require(cols % kBlock == 0, "SparsePattern24: cols must be a multiple of 4");
        for (auto& c : codes_) c = encode(0, 1);
    }

    static constexpr std::uint8_t encode(unsigned first, unsigned second) {
        return static_cast<std::uint8_t>(first | (second << 2));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t blocks_per_row() const { return cols_ / kBlock; }
    /// Packed (retained) values per row.
    std::size_t packed_cols() const { return cols_ / 2; }

    std::pair<unsigned, unsigned> positions(std::size_t row, std::size_t block) const {
        const auto c = codes_[row * blocks_per_row() + block];
        return {c & 3u, (c >> 2) & 3u};
    }

    void set(std::size_t row, std::size_t block, unsigned first, unsigned second) {
        if (!(first < second && second < kBlock)) throw Error("SparsePattern24: positions must be increasing in [0,4)");
        codes_[row * blocks_per_row() + block] = encode(first, second);
    }

    /// Dense input column of packed slot `p` in `row`.
    std::size_t column_of(std::size_t row, std::size_t p) const {
        const auto [a, b] = positions(row, p / 2);
        return (p / 2) * kBlock + ((p % 2 == 0) ? a : b);
    }

    const std::vector<std::uint8_t>& codes() const { return codes_; }
    std::vector<std::uint8_t>& codes() { return codes_; }

    bool operator==(const SparsePattern24&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> codes_;
};

/// 2:4-compressed weight matrix (rows = output channels, cols = padded input
/// width). `values` holds the two retained values of each block, row-major,
/// rows x cols/2.
struct SparseWeight24 {
    SparsePattern24 pattern;
    std::vector<double> values;

    std::size_t rows() const { return pattern.rows(); }
    std::size_t cols() const { return pattern.cols(); }

    DenseMatrix packed_values() const { return DenseMatrix(rows(), pattern.packed_cols(), values); }

    DenseMatrix expand() const {
        DenseMatrix dense(rows(), cols());
        for (std::size_t r = 0; r < rows(); ++r)
            for (std::size_t p = 0; p < pattern.packed_cols(); ++p)
                dense(r, pattern.column_of(r, p)) = values[r * pattern.packed_cols() + p];
        return dense;
    }

    /// Compresses a dense matrix with at most two nonzeros per block. Blocks
    /// with fewer nonzeros are filled with the lowest-index zero positions.
    static SparseWeight24 from_dense(const DenseMatrix& dense) {
        require(dense.cols() % kBlock == 0, "SparseWeight24: cols must be a multiple of 4");
        SparseWeight24 s{SparsePattern24(dense.rows(), dense.cols()), {}};
        s.values.reserve(dense.rows() * dense.cols() / 2);
        for (std::size_t r = 0; r < dense.rows(); ++r) {
            for (std::size_t b = 0; b < dense.cols() / kBlock; ++b) {
                std::array<bool, kBlock> keep{};
                std::size_t kept = 0;
                for (unsigned i = 0; i < kBlock; ++i) {
                    if (dense(r, b * kBlock + i) != 0.0) {
                        keep[i] = true;
                        ++kept;
                    }
                }
                if (kept > kKeep) throw Error("SparseWeight24: block has more than two nonzeros");
                for (unsigned i = 0; i < kBlock && kept < kKeep; ++i) {
                    if (!keep[i]) {
                        keep[i] = true;
                        ++kept;
                    }
                }
                unsigned pos[2];
                unsigned n = 0;
                for (unsigned i = 0; i < kBlock; ++i)
                    if (keep[i]) pos[n++] = i;
                s.pattern.set(r, b, pos[0], pos[1]);
                s.values.push_back(dense(r, b * kBlock + pos[0]));
                s.values.push_back(dense(r, b * kBlock + pos[1]));
            }
        }
        return s;
    }

    bool operator==(const SparseWeight24&) const = default;
};

/// True if every block of 4 in every row has at most two nonzeros.
inline bool is_2_4_sparse(const DenseMatrix& m) {
    if (m.cols() % kBlock != 0) return false;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t b = 0; b < m.cols(); b += kBlock) {
            int nz = 0;
            for (std::size_t i = 0; i < kBlock; ++i) nz += m(r, b + i) != 0.0;
            if (nz > static_cast<int>(kKeep)) return false;
        }
    }
    return true;
}

}  // namespace accllm::compress
