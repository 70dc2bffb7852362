// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include <Eigen/Dense>

#include "accllm/core/common.hpp"
#include "accllm/core/linalg.hpp"
#include "accllm/core/matrix.hpp"

namespace accllm::compress {

inline constexpr double kDefaultDampFraction = 0.01;

/// H = X^T X + damp * I over the input width of a layer.
struct HessianState {
    DenseMatrix h;
    double damp = 0.0;

    std::size_t dim() const { return h.rows(); }
};

/// Builds the layer Hessian from calibration rows. damp is
/// damp_fraction * mean(diag(X^T X)). Throws SingularMatrixError when the
/// result cannot be Cholesky-factorized.
inline HessianState build_hessian(const DenseMatrix& calib, double damp_fraction = kDefaultDampFraction) {
    if (calib.rows() == 0 || calib.cols() == 0) throw DimensionError("build_hessian: need at least one row");
    if (!(damp_fraction >= 0.0)) throw ConfigError("build_hessian: damp_fraction must be >= 0");
    const EigenMat x = to_eigen(calib);
    EigenMat h = x.transpose() * x;
    h = 0.5 * (h + h.transpose());
    const double damp = damp_fraction * h.diagonal().mean();
    h.diagonal().array() += damp;
    Eigen::LLT<EigenMat> llt(h);
    if (llt.info() != Eigen::Success) throw SingularMatrixError("build_hessian: Hessian is singular");
    return {from_eigen(h), damp};
}

/// Wraps an externally supplied SPD matrix (damp = 0).
inline HessianState hessian_from_matrix(const DenseMatrix& h) {
    require(h.rows() == h.cols(), "hessian_from_matrix: H must be square");
    Eigen::LLT<EigenMat> llt(to_eigen(h));
    if (llt.info() != Eigen::Success) throw SingularMatrixError("hessian_from_matrix: H is not positive definite");
    return {h, 0.0};
}

/// Sum over output rows of delta^T H delta, i.e. ||X W^T - X W'^T||_F^2 up to
/// the damping term. `a` and `b` are d_out x d_in.
inline double hessian_error(const DenseMatrix& a, const DenseMatrix& b, const HessianState& hess) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "hessian_error: shapes differ");
    require(a.cols() <= hess.dim(), "hessian_error: Hessian too small");
    const std::size_t n = a.cols();
    double total = 0.0;
    std::vector<double> delta(n);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) delta[c] = a(r, c) - b(r, c);
        for (std::size_t i = 0; i < n; ++i) {
            if (delta[i] == 0.0) continue;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += hess.h(i, j) * delta[j];
            total += delta[i] * acc;
        }
    }
    return total;
}

}  // namespace accllm::compress
