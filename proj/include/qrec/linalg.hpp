#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "qrec/core.hpp"

namespace qrec {

// Dense row-major matrix. Only what the mixture model needs: storage,
// Cholesky factorization, forward substitution, log-determinant.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

// Lower Cholesky factor L of a symmetric positive-definite A, A = L L^T.
// Throws ModelError when a pivot is not strictly positive.
inline Matrix cholesky_lower(const Matrix& a, const std::string& what = "matrix") {
    const std::size_t n = a.rows();
    Matrix l(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (!(s > 0.0)) {
                    throw ModelError(what + " is not positive definite (pivot " +
                                     std::to_string(i) + ")");
                }
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

// Solves L y = b for lower-triangular L.
inline std::vector<double> forward_substitute(const Matrix& l, const std::vector<double>& b) {
    const std::size_t n = l.rows();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    return y;
}

// log det(A) from A's Cholesky factor: 2 sum log L_ii.
inline double cholesky_log_det(const Matrix& l) {
    double s = 0.0;
    for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
    return 2.0 * s;
}

}  // namespace qrec
