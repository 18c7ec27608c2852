#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include <fedlora/errors.hpp>
#include <fedlora/matrix.hpp>

namespace fedlora {

// Thin SVD: m = u * diag(singular_values) * vt with u (rows x k),
// vt (k x cols), k = min(rows, cols). Singular values descending, >= 0;
// u has orthonormal columns, vt orthonormal rows.
struct SvdResult {
    Matrix u;
    std::vector<double> singular_values;
    Matrix vt;

    Matrix reconstruct() const {
        Matrix scaled = u;
        for (std::size_t i = 0; i < scaled.rows(); ++i)
            for (std::size_t j = 0; j < scaled.cols(); ++j)
                scaled(i, j) *= singular_values[j];
        return matmul(scaled, vt);
    }
};

namespace detail {

inline constexpr int kJacobiMaxSweeps = 100;
inline constexpr double kJacobiTol = 1e-12;

// One-sided Jacobi on the columns of a tall (rows >= cols) matrix.
// Returns column-major columns of the rotated matrix plus accumulated V.
struct JacobiState {
    std::vector<std::vector<double>> cols; // rotated input columns
    Matrix v;                              // accumulated right rotations, n x n
};

inline JacobiState jacobi_rotate(const Matrix& m) {
    const std::size_t n = m.cols();
    JacobiState st{std::vector<std::vector<double>>(n, std::vector<double>(m.rows())),
                   Matrix::identity(n)};
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < m.rows(); ++i)
            st.cols[j][i] = m(i, j);

    for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m.rows(); ++i) {
                    alpha += st.cols[p][i] * st.cols[p][i];
                    beta += st.cols[q][i] * st.cols[q][i];
                    gamma += st.cols[p][i] * st.cols[q][i];
                }
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta) || gamma == 0.0)
                    continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m.rows(); ++i) {
                    const double xp = st.cols[p][i];
                    const double xq = st.cols[q][i];
                    st.cols[p][i] = c * xp - s * xq;
                    st.cols[q][i] = s * xp + c * xq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = st.v(i, p);
                    const double vq = st.v(i, q);
                    st.v(i, p) = c * vp - s * vq;
                    st.v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) return st;
    }
    throw ConvergenceError("svd: Jacobi sweeps exceeded cap of " +
                               std::to_string(kJacobiMaxSweeps),
                           kJacobiMaxSweeps);
}

// Replace a numerically-null column of u with a unit vector orthogonal to
// all columns already present, so u keeps orthonormal columns even when the
// input is rank deficient.
inline void complete_column(Matrix& u, std::size_t col) {
    const std::size_t m = u.rows();
    for (std::size_t basis = 0; basis < m; ++basis) {
        std::vector<double> cand(m, 0.0);
        cand[basis] = 1.0;
        for (std::size_t j = 0; j < u.cols(); ++j) {
            if (j == col) continue;
            double dot = 0.0;
            for (std::size_t i = 0; i < m; ++i) dot += cand[i] * u(i, j);
            for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u(i, j);
        }
        double norm = 0.0;
        for (double v : cand) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.5) {
            for (std::size_t i = 0; i < m; ++i) u(i, col) = cand[i] / norm;
            return;
        }
    }
    throw ConvergenceError("svd: could not complete orthonormal basis", 0);
}

inline SvdResult svd_tall(const Matrix& m) {
    const std::size_t rows = m.rows(), n = m.cols();
    JacobiState st = jacobi_rotate(m);

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (double v : st.cols[j]) s += v * v;
        norms[j] = std::sqrt(s);
    }

    // Stable sort by descending singular value.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    SvdResult res{Matrix(rows, n), std::vector<double>(n), Matrix(n, m.cols())};
    double max_norm = norms.empty() ? 0.0 : norms[order[0]];
    const double null_tol = std::max(max_norm, 1.0) * 1e-300;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        res.singular_values[j] = norms[src];
        if (norms[src] > null_tol)
            for (std::size_t i = 0; i < rows; ++i)
                res.u(i, j) = st.cols[src][i] / norms[src];
        for (std::size_t k = 0; k < n; ++k)
            res.vt(j, k) = st.v(k, src);
    }
    // Null columns get an orthonormal completion after the data columns exist.
    for (std::size_t j = 0; j < n; ++j)
        if (norms[order[j]] <= null_tol) complete_column(res.u, j);
    return res;
}

} // namespace detail

inline SvdResult svd(const Matrix& m) {
    if (m.rows() >= m.cols()) return detail::svd_tall(m);
    SvdResult t = detail::svd_tall(m.transpose());
    return SvdResult{t.vt.transpose(), std::move(t.singular_values), t.u.transpose()};
}

// Rank-r factorization of the best rank-r approximation: b = U_r * diag(d_r),
// a = V_r^T, so b*a is the truncated SVD reconstruction. Singular values are
// absorbed into b, keeping a row-orthonormal.
inline std::pair<Matrix, Matrix> truncated_svd(const Matrix& m, std::size_t r) {
    const std::size_t k = std::min(m.rows(), m.cols());
    if (r < 1 || r > k)
        throw DimensionError("truncated_svd: rank " + std::to_string(r) +
                             " out of range [1, " + std::to_string(k) + "] for " +
                             m.shape_string());
    SvdResult full = svd(m);
    Matrix b(m.rows(), r);
    Matrix a(r, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j)
            b(i, j) = full.u(i, j) * full.singular_values[j];
    for (std::size_t j = 0; j < r; ++j)
        for (std::size_t i = 0; i < m.cols(); ++i)
            a(j, i) = full.vt(j, i);
    return {std::move(b), std::move(a)};
}

} // namespace fedlora
