#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "diffgraph/common.hpp"
#include "diffgraph/rng.hpp"

namespace diffgraph {

// Row-major throughout: it matches the on-disk layout (raw row-major f32), so
// serialization is a plain cast without reshuffling.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }
inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline Mat random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

// Gram-Schmidt over Gaussian rows; rows() <= cols() required.
inline Mat random_orthonormal_rows(int rows, int cols, Rng& rng) {
    require(rows <= cols, errc::invalid_argument, "cannot orthonormalize more rows than cols");
    Mat m = random_matrix(rows, cols, rng);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < i; ++j) m.row(i) -= m.row(i).dot(m.row(j)) * m.row(j);
        double n = m.row(i).norm();
        if (n < 1e-9) {
            // astronomically unlikely; redraw the row
            for (int c = 0; c < cols; ++c) m(i, c) = rng.normal();
            --i;
            continue;
        }
        m.row(i) /= n;
    }
    return m;
}

inline std::vector<float> to_f32(const Mat& m) {
    std::vector<float> out(static_cast<std::size_t>(m.rows()) * m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out[static_cast<std::size_t>(i) * m.cols() + j] = static_cast<float>(m(i, j));
    return out;
}

inline Mat from_f32(const std::vector<float>& v, int rows, int cols) {
    require(v.size() == static_cast<std::size_t>(rows) * cols, errc::dimension_mismatch,
            "f32 buffer size does not match shape");
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = v[static_cast<std::size_t>(i) * cols + j];
    return m;
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Digamma via recurrence up to x >= 6, then the asymptotic series. Relative
// error is far below the 1e-3 gradient-check tolerance for x > 1.
inline double digamma(double x) {
    require(x > 0.0, errc::invalid_argument, "digamma domain");
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x;
    double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    return result;
}

} // namespace diffgraph
