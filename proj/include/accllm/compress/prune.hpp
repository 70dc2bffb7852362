// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <utility>
#include <vector>

#include "accllm/compress/hessian.hpp"
#include "accllm/compress/sparse24.hpp"
#include "accllm/core/common.hpp"
#include "accllm/core/linalg.hpp"
#include "accllm/core/matrix.hpp"

namespace accllm::compress {

struct PruneResult {
    SparseWeight24 weight;
    /// sum_rows delta^T H delta between the (padded) input and the pruned weight.
    double reconstruction_error = 0.0;
};

/// Picks the two largest scores of a block; equal scores go to the lower index.
inline std::pair<unsigned, unsigned> top2(const std::array<double, kBlock>& score) {
    unsigned best = 0;
    for (unsigned i = 1; i < kBlock; ++i)
        if (score[i] > score[best]) best = i;
    unsigned second = best == 0 ? 1 : 0;
    for (unsigned i = 0; i < kBlock; ++i)
        if (i != best && score[i] > score[second]) second = i;
    return best < second ? std::pair{best, second} : std::pair{second, best};
}

/// Extends H to `n` columns with unit diagonal entries for padding.
inline HessianState pad_hessian(const HessianState& hess, std::size_t n) {
    if (hess.dim() == n) return hess;
    HessianState out{DenseMatrix(n, n), hess.damp};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i < hess.dim() && j < hess.dim())
                out.h(i, j) = hess.h(i, j);
            else if (i == j)
                out.h(i, j) = 1.0;
        }
    }
    return out;
}

/// Hessian-guided 2:4 pruning with OBS compensation. W is d_out x d_in; the
/// input width is zero-padded to a multiple of 4. Columns are processed left to
/// right: at each block boundary every row keeps its two highest-scoring
/// positions under W^2 / U_jj^2 (U the upper Cholesky factor of H^-1), then
/// each column's pruning error is propagated into the unprocessed columns.
inline PruneResult prune_2_4(const DenseMatrix& w, const HessianState& hess) {
    require(hess.dim() == w.cols() || hess.dim() == pad_cols(w, kBlock).cols(),
            "prune_2_4: Hessian width must match the weight input width");
    const DenseMatrix original = pad_cols(w, kBlock);
    const std::size_t n = original.cols();
    const HessianState h = pad_hessian(hess, n);
    const DenseMatrix u = cholesky_upper(spd_inverse(h.h));

    DenseMatrix work = original;
    DenseMatrix pruned(original.rows(), n);
    SparsePattern24 pattern(original.rows(), n);
    std::vector<std::array<bool, kBlock>> keep(original.rows());
    for (std::size_t b0 = 0; b0 < n; b0 += kBlock) {
        for (std::size_t r = 0; r < work.rows(); ++r) {
            std::array<double, kBlock> score{};
            for (unsigned i = 0; i < kBlock; ++i) {
                const double d = u(b0 + i, b0 + i);
                score[i] = work(r, b0 + i) * work(r, b0 + i) / (d * d);
            }
            const auto [a, b] = top2(score);
            pattern.set(r, b0 / kBlock, a, b);
            keep[r] = {};
            keep[r][a] = keep[r][b] = true;
        }
        for (unsigned i = 0; i < kBlock; ++i) {
            const std::size_t col = b0 + i;
            const double diag = u(col, col);
            for (std::size_t r = 0; r < work.rows(); ++r) {
                const double value = work(r, col);
                const double kept = keep[r][i] ? value : 0.0;
                pruned(r, col) = kept;
                const double err = (value - kept) / diag;
                if (err == 0.0) continue;
                for (std::size_t j = col + 1; j < n; ++j) work(r, j) -= err * u(col, j);
            }
        }
    }

    PruneResult res;
    res.weight.pattern = std::move(pattern);
    res.weight.values.reserve(original.rows() * n / 2);
    for (std::size_t r = 0; r < original.rows(); ++r)
        for (std::size_t p = 0; p < n / 2; ++p) res.weight.values.push_back(pruned(r, res.weight.pattern.column_of(r, p)));
    res.reconstruction_error = hessian_error(original, pruned, h);
    return res;
}

}  // namespace accllm::compress
