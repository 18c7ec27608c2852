#pragma once

// Test-only utilities: independent oracles and random generators. These stay
// deliberately naive so they cannot share bugs with the library code.

#include <cstdint>
#include <vector>

#include <fedlora/lora.hpp>
#include <fedlora/matrix.hpp>
#include <fedlora/rng.hpp>

namespace testutil {

// Naive triple-loop product, the oracle for matmul.
inline fedlora::Matrix matmul_oracle(const fedlora::Matrix& a, const fedlora::Matrix& b) {
    fedlora::Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) sum += a(i, k) * b(k, j);
            c(i, j) = sum;
        }
    return c;
}

inline fedlora::Matrix random_matrix(std::size_t rows, std::size_t cols,
                                     fedlora::Rng& rng, double scale = 1.0) {
    fedlora::Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            m(i, j) = scale * rng.next_gaussian();
    return m;
}

inline fedlora::LoraAdapter random_adapter(std::size_t m, std::size_t n, std::size_t r,
                                           fedlora::Rng& rng, double scaling = 1.0) {
    return fedlora::LoraAdapter(random_matrix(m, r, rng), random_matrix(r, n, rng), scaling);
}

inline double max_abs_diff(const fedlora::Matrix& a, const fedlora::Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
    return worst;
}

// Jarque-Bera statistic; ~chi^2(2) under normality, 1% critical value 9.21.
inline double jarque_bera(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : xs) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double skew = m3 / std::pow(m2, 1.5);
    const double kurt = m4 / (m2 * m2) - 3.0;
    return n / 6.0 * (skew * skew + kurt * kurt / 4.0);
}

inline constexpr double kJb1PercentCritical = 9.21;

} // namespace testutil
