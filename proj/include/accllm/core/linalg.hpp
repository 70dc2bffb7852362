// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include "accllm/core/common.hpp"
#include "accllm/core/matrix.hpp"

namespace accllm {

using EigenMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline EigenMat to_eigen(const DenseMatrix& m) {
    EigenMat e(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
    return e;
}

template <typename Derived>
DenseMatrix from_eigen(const Eigen::MatrixBase<Derived>& e) {
    DenseMatrix m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
    for (Eigen::Index r = 0; r < e.rows(); ++r)
        for (Eigen::Index c = 0; c < e.cols(); ++c) m(r, c) = e(r, c);
    return m;
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
inline DenseMatrix spd_inverse(const DenseMatrix& a) {
    require(a.rows() == a.cols(), "spd_inverse: matrix must be square");
    const EigenMat e = to_eigen(a);
    Eigen::LLT<EigenMat> llt(e);
    if (llt.info() != Eigen::Success) throw SingularMatrixError("matrix is not positive definite");
    const EigenMat inv = llt.solve(EigenMat::Identity(e.rows(), e.cols()));
    return from_eigen(inv);
}

/// Upper-triangular U with a = U^T U.
inline DenseMatrix cholesky_upper(const DenseMatrix& a) {
    require(a.rows() == a.cols(), "cholesky_upper: matrix must be square");
    Eigen::LLT<EigenMat> llt(to_eigen(a));
    if (llt.info() != Eigen::Success) throw SingularMatrixError("matrix is not positive definite");
    return from_eigen(EigenMat(llt.matrixU()));
}

}  // namespace accllm
