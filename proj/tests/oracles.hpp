// Copyright 2026 The AccLLM-Sim Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference computations used only by the tests. Nothing here
// calls into the library code paths it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <array>

#include "accllm/core/linalg.hpp"
#include "accllm/core/matrix.hpp"
#include "accllm/core/rng.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_rows(const accllm::DenseMatrix& m) {
    Mat out(m.rows(), std::vector<double>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    return out;
}

inline Mat mul(const Mat& a, const Mat& b) {
    const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
    Mat out(n, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a[i][t] * b[t][j];
            out[i][j] = acc;
        }
    return out;
}

/// Three-step softmax attention for one query over a key list: scores, then
/// exp / sum, then the weighted sum of values.
inline std::vector<double> naive_attention_row(const std::vector<double>& q, const Mat& keys, const Mat& values) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.size()));
    std::vector<double> s(keys.size());
    double peak = -1e300;
    for (std::size_t j = 0; j < keys.size(); ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < q.size(); ++c) dot += q[c] * keys[j][c];
        s[j] = dot * scale;
        if (s[j] > peak) peak = s[j];
    }
    double denom = 0.0;
    for (double& v : s) {
        v = std::exp(v - peak);
        denom += v;
    }
    std::vector<double> out(values.empty() ? 0 : values[0].size(), 0.0);
    for (std::size_t j = 0; j < keys.size(); ++j)
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += s[j] / denom * values[j][c];
    return out;
}

/// Relative difference |a - b| / max(|b|, floor).
inline double rel_err(double a, double b, double floor = 1e-12) {
    return std::abs(a - b) / std::max(std::abs(b), floor);
}

/// Max over elements of |a - b| / max(max|b|, floor).
inline double rel_err(const accllm::DenseMatrix& a, const accllm::DenseMatrix& b, double floor = 1e-12) {
    double peak = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        peak = std::max(peak, std::abs(b.data()[i]));
        diff = std::max(diff, std::abs(a.data()[i] - b.data()[i]));
    }
    return diff / std::max(peak, floor);
}

// Quadratic form sum_r (a_r - b_r)^T H (a_r - b_r), evaluated directly.
inline double quad_error(const accllm::DenseMatrix& a, const accllm::DenseMatrix& b, const accllm::DenseMatrix& h) {
    double total = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t i = 0; i < a.cols(); ++i)
            for (std::size_t j = 0; j < a.cols(); ++j) total += (a(r, i) - b(r, i)) * h(i, j) * (a(r, j) - b(r, j));
    return total;
}

// Uncompensated magnitude pruning: keep the two largest |w| of each block.
inline accllm::DenseMatrix magnitude_prune(const accllm::DenseMatrix& w) {
    accllm::DenseMatrix out(w.rows(), w.cols());
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t b = 0; b < w.cols(); b += 4) {
            std::array<std::size_t, 4> idx{0, 1, 2, 3};
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::size_t x, std::size_t y) { return std::abs(w(r, b + x)) > std::abs(w(r, b + y)); });
            out(r, b + idx[0]) = w(r, b + idx[0]);
            out(r, b + idx[1]) = w(r, b + idx[1]);
        }
    return out;
}

// Correlated calibration data so the Hessian has off-diagonal structure.
inline accllm::DenseMatrix correlated_calib(std::size_t n, std::size_t d, accllm::Rng& rng) {
    const auto z = accllm::DenseMatrix::gaussian(n, d, rng);
    const auto mix = accllm::DenseMatrix::gaussian(d, d, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    return accllm::matmul(z, mix + accllm::DenseMatrix::identity(d));
}

inline std::vector<double> singular_values_sq(const accllm::DenseMatrix& m) {
    const auto e = accllm::to_eigen(m);
    Eigen::SelfAdjointEigenSolver<accllm::EigenMat> eig(e.transpose() * e);
    std::vector<double> ev(eig.eigenvalues().data(), eig.eigenvalues().data() + eig.eigenvalues().size());
    std::sort(ev.rbegin(), ev.rend());
    for (double& v : ev) v = std::max(v, 0.0);
    return ev;
}

inline Mat head_rows(const accllm::DenseMatrix& m, const std::vector<std::size_t>& rows, std::size_t off, std::size_t dk) {
    Mat out;
    for (std::size_t r : rows) out.emplace_back(m.row(r).begin() + off, m.row(r).begin() + off + dk);
    return out;
}

// Error budget for attention over perturbed operands: values move by at most
// dv, scores by at most ds, so the convex weights move by at most
// 2 (e^{2 ds} - 1) in l1 norm.
inline double attention_tolerance(double dv, double ds, double vmax) { return dv + 2.0 * std::expm1(2.0 * ds) * vmax; }

}  // namespace oracle
