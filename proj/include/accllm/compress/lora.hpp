// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>

#include <Eigen/Dense>

#include "accllm/compress/quantize.hpp"
#include "accllm/core/common.hpp"
#include "accllm/core/linalg.hpp"
#include "accllm/core/matrix.hpp"
#include "accllm/core/quant_tensor.hpp"

namespace accllm::compress {

inline constexpr std::size_t kDefaultLoraRank = 64;

/// Low-rank correction W ~ W' + A B^T for an output-major weight.
/// A is d_out x r, B is d_in x r.
struct LoraPair {
    DenseMatrix a;
    DenseMatrix b;

    std::size_t rank() const { return a.cols(); }
    DenseMatrix product() const { return matmul_nt(a, b); }
};

/// 8-bit form of a LoraPair. `a` is quantized per row (output channel);
/// `bt` holds B^T quantized per row, i.e. one scale per rank column of B.
struct QuantLoraPair {
    QuantTensor a;
    QuantTensor bt;

    std::size_t rank() const { return a.cols; }
    DenseMatrix a_dequant() const { return a.dequantize(); }
    DenseMatrix b_dequant() const { return transpose(bt.dequantize()); }
    DenseMatrix product() const { return matmul(a.dequantize(), bt.dequantize()); }
};

namespace detail {

inline LoraPair truncated_svd(const EigenMat& m, std::size_t r) {
    Eigen::JacobiSVD<EigenMat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sigma = svd.singularValues();
    const auto rr = static_cast<Eigen::Index>(r);
    EigenMat a = svd.matrixU().leftCols(rr);
    EigenMat b = svd.matrixV().leftCols(rr);
    for (Eigen::Index k = 0; k < rr; ++k) {
        a.col(k) *= sigma(k);
        if (sigma(k) == 0.0) {
            a.col(k).setZero();
            b.col(k).setZero();
        }
    }
    return {from_eigen(a), from_eigen(b)};
}

inline void check_rank(const DenseMatrix& w, const DenseMatrix& wq, std::size_t r) {
    require(w.rows() == wq.rows() && w.cols() == wq.cols(), "lora_init: weight shapes differ");
    if (r < 1 || r > std::min(w.rows(), w.cols())) throw ConfigError("lora_init: rank must lie in [1, min(d_out, d_in)]");
}

}  // namespace detail

/// Rank-r truncated SVD of the residual W - W'_Q: A = U_r S_r, B = V_r.
/// This minimizes ||W - (W'_Q + A B^T)||_F over all rank-r corrections.
inline LoraPair lora_init(const DenseMatrix& w, const DenseMatrix& wq_dequant, std::size_t r) {
    detail::check_rank(w, wq_dequant, r);
    return detail::truncated_svd(to_eigen(w - wq_dequant), r);
}

/// Calibration-weighted variant: minimizes ||X (W - W'_Q - A B^T)^T||_F over
/// rank-r corrections, using H = X^T X = L L^T. Requires H positive definite.
inline LoraPair lora_init_weighted(const DenseMatrix& w, const DenseMatrix& wq_dequant, std::size_t r,
                                   const DenseMatrix& h) {
    detail::check_rank(w, wq_dequant, r);
    require(h.rows() == w.cols() && h.cols() == w.cols(), "lora_init_weighted: H must be d_in x d_in");
    Eigen::LLT<EigenMat> llt(to_eigen(h));
    if (llt.info() != Eigen::Success) throw SingularMatrixError("lora_init_weighted: H is not positive definite");
    const EigenMat l = llt.matrixL();
    const EigenMat rl = to_eigen(w - wq_dequant) * l;
    LoraPair p = detail::truncated_svd(rl, r);
    // B = L^-T V_r
    const EigenMat b = l.transpose().triangularView<Eigen::Upper>().solve(to_eigen(p.b));
    p.b = from_eigen(b);
    return p;
}

inline QuantLoraPair lora_quantize(const LoraPair& p, int bits = 8) {
    require(p.a.cols() == p.b.cols(), "lora_quantize: A and B ranks differ");
    return {quant_per_token_act(p.a, bits), quant_per_token_act(transpose(p.b), bits)};
}

}  // namespace accllm::compress
