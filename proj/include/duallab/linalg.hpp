#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

namespace duallab::linalg {

// Row-major dense matrix, just enough for the small systems in this project
// (martingale polytopes, hedge programs, barrier Newton steps).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

// Solves A x = b by Gaussian elimination with partial pivoting.
// Returns nullopt when the matrix is singular to working precision.
inline std::optional<std::vector<double>> solve(Matrix m, std::vector<double> b,
                                                double pivot_tol = 1e-13) {
    const std::size_t n = m.rows;
    if (n != m.cols || b.size() != n) return std::nullopt;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::fabs(m(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double v = std::fabs(m(i, k));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (best < pivot_tol) return std::nullopt;
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
            std::swap(b[k], b[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = m(i, k) / m(k, k);
            if (f == 0.0) continue;
            for (std::size_t j = k; j < n; ++j) m(i, j) -= f * m(k, j);
            b[i] -= f * b[k];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= m(i, j) * x[j];
        x[i] = s / m(i, i);
    }
    return x;
}

// Orthonormal basis of the null space of A (rows = constraints), via
// elimination to row echelon form and Gram-Schmidt on the free-variable
// directions. Intended for a handful of rows/columns.
inline std::vector<std::vector<double>> null_space(Matrix m, double tol = 1e-11) {
    const std::size_t rows = m.rows, cols = m.cols;
    std::vector<std::size_t> pivot_col;
    std::size_t r = 0;
    for (std::size_t c = 0; c < cols && r < rows; ++c) {
        std::size_t piv = r;
        double best = std::fabs(m(r, c));
        for (std::size_t i = r + 1; i < rows; ++i) {
            if (std::fabs(m(i, c)) > best) {
                best = std::fabs(m(i, c));
                piv = i;
            }
        }
        if (best < tol) continue;
        if (piv != r)
            for (std::size_t j = 0; j < cols; ++j) std::swap(m(r, j), m(piv, j));
        const double d = m(r, c);
        for (std::size_t j = 0; j < cols; ++j) m(r, j) /= d;
        for (std::size_t i = 0; i < rows; ++i) {
            if (i == r) continue;
            const double f = m(i, c);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < cols; ++j) m(i, j) -= f * m(r, j);
        }
        pivot_col.push_back(c);
        ++r;
    }
    std::vector<bool> is_pivot(cols, false);
    for (auto c : pivot_col) is_pivot[c] = true;

    std::vector<std::vector<double>> basis;
    for (std::size_t free = 0; free < cols; ++free) {
        if (is_pivot[free]) continue;
        std::vector<double> v(cols, 0.0);
        v[free] = 1.0;
        for (std::size_t i = 0; i < pivot_col.size(); ++i) v[pivot_col[i]] = -m(i, free);
        basis.push_back(std::move(v));
    }
    // Gram-Schmidt; the raw vectors are independent by construction.
    for (std::size_t i = 0; i < basis.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < cols; ++k) dot += basis[i][k] * basis[j][k];
            for (std::size_t k = 0; k < cols; ++k) basis[i][k] -= dot * basis[j][k];
        }
        double norm = 0.0;
        for (double x : basis[i]) norm += x * x;
        norm = std::sqrt(norm);
        for (double& x : basis[i]) x /= norm;
    }
    return basis;
}

// In-place Cholesky factorization of a symmetric positive definite matrix.
// Returns false if a non-positive pivot is met.
inline bool cholesky(Matrix& m) {
    const std::size_t n = m.rows;
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= m(j, k) * m(j, k);
        if (d <= 0.0 || !std::isfinite(d)) return false;
        const double l = std::sqrt(d);
        m(j, j) = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= m(i, k) * m(j, k);
            m(i, j) = s / l;
        }
    }
    return true;
}

// Solves L L^T x = b given the Cholesky factor from cholesky().
inline std::vector<double> cholesky_solve(const Matrix& l, std::vector<double> b) {
    const std::size_t n = l.rows;
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b[k];
        b[i] = s / l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * b[k];
        b[i] = s / l(i, i);
    }
    return b;
}

inline double dot(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm2(const std::vector<double>& x) { return std::sqrt(dot(x, x)); }

} // namespace duallab::linalg
