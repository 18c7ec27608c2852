#include <doctest.h>

#include <cmath>
#include <sstream>

#include <fedlora/matrix.hpp>
#include <fedlora/svd.hpp>

#include "helpers.hpp"

using namespace fedlora;
using testutil::matmul_oracle;
using testutil::max_abs_diff;
using testutil::random_matrix;

TEST_CASE("matrix constructors enforce invariants") {
    CHECK_THROWS_AS(Matrix(0, 3), DimensionError);
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), DimensionError);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::nan("")}), DimensionError);
    CHECK_THROWS_AS(Matrix(1, 1, std::numeric_limits<double>::infinity()), DimensionError);
}

TEST_CASE("matmul identity and hand-checked products") {
    Rng rng(11);
    Matrix m = random_matrix(3, 5, rng);
    CHECK(max_abs_diff(matmul(Matrix::identity(3), m), m) == 0.0);

    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix b(2, 1, {0, 1});
    Matrix c = matmul(a, b);
    CHECK(c(0, 0) == 2.0);
    CHECK(c(1, 0) == 4.0);
}

TEST_CASE("matmul dimension mismatch names both shapes") {
    try {
        matmul(Matrix(2, 3), Matrix(4, 2));
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("4x2") != std::string::npos);
    }
}

TEST_CASE("matmul matches triple-loop oracle on random shapes") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + rng.next_below(16);
        const std::size_t k = 1 + rng.next_below(16);
        const std::size_t n = 1 + rng.next_below(16);
        Matrix a = random_matrix(m, k, rng);
        Matrix b = random_matrix(k, n, rng);
        CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) <= 1e-12);
    }
}

TEST_CASE("frobenius norm basics") {
    CHECK(frobenius_norm(Matrix(3, 3)) == 0.0);
    CHECK(frobenius_norm(Matrix(1, 2, {3, 4})) == doctest::Approx(5.0).epsilon(1e-15));
    Rng rng(7);
    Matrix m = random_matrix(9, 6, rng);
    SvdResult s = svd(m);
    double sum = 0.0;
    for (double d : s.singular_values) sum += d * d;
    CHECK(frobenius_norm(m) == doctest::Approx(std::sqrt(sum)).epsilon(1e-9));
}

TEST_CASE("svd of identity") {
    SvdResult s = svd(Matrix::identity(4));
    REQUIRE(s.singular_values.size() == 4);
    for (double d : s.singular_values) CHECK(d == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd of [[3,0],[4,5]] has singular values 3*sqrt(5), sqrt(5)") {
    // Oracle: eigenvalues of M^T M = [[25,20],[20,25]] are 45 and 5.
    SvdResult s = svd(Matrix(2, 2, {3, 0, 4, 5}));
    CHECK(s.singular_values[0] == doctest::Approx(3.0 * std::sqrt(5.0)).epsilon(1e-12));
    CHECK(s.singular_values[1] == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
}

TEST_CASE("svd of rank-1 outer product gives (1, 0) and orthonormal u") {
    // u = (0.6, 0.8), v = (1/sqrt(2), -1/sqrt(2))
    const double s2 = 1.0 / std::sqrt(2.0);
    Matrix m(2, 2, {0.6 * s2, -0.6 * s2, 0.8 * s2, -0.8 * s2});
    SvdResult s = svd(m);
    CHECK(s.singular_values[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(s.singular_values[1]) <= 1e-12);
    Matrix utu = matmul(s.u.transpose(), s.u);
    CHECK(frobenius_norm(utu - Matrix::identity(2)) <= 1e-8);
}

TEST_CASE("svd reconstruction and orthonormality on random matrices") {
    Rng rng(3);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t rows = 1 + rng.next_below(64);
        const std::size_t cols = 1 + rng.next_below(64);
        Matrix m = random_matrix(rows, cols, rng);
        SvdResult s = svd(m);
        const std::size_t k = std::min(rows, cols);
        REQUIRE(s.singular_values.size() == k);
        for (std::size_t j = 0; j + 1 < k; ++j) {
            CHECK(s.singular_values[j] >= s.singular_values[j + 1]);
            CHECK(s.singular_values[j] >= 0.0);
        }
        const double rel =
            frobenius_norm(s.reconstruct() - m) / std::max(1.0, frobenius_norm(m));
        CHECK(rel <= 1e-9);
        CHECK(frobenius_norm(matmul(s.u.transpose(), s.u) - Matrix::identity(k)) <= 1e-8);
        CHECK(frobenius_norm(matmul(s.vt, s.vt.transpose()) - Matrix::identity(k)) <= 1e-8);
    }
}

TEST_CASE("truncated svd examples") {
    Rng rng(5);

    SUBCASE("rank-1 input, r=1: exact") {
        Matrix u = random_matrix(6, 1, rng);
        Matrix v = random_matrix(1, 4, rng);
        Matrix m = matmul(u, v);
        auto [b, a] = truncated_svd(m, 1);
        CHECK(frobenius_norm(matmul(b, a) - m) <= 1e-10);
    }

    SUBCASE("full rank retention: exact") {
        Matrix m = random_matrix(5, 7, rng);
        auto [b, a] = truncated_svd(m, 5);
        CHECK(frobenius_norm(matmul(b, a) - m) <= 1e-9);
    }

    SUBCASE("Eckart-Young tail identity on 6x4, r=2") {
        Matrix m = random_matrix(6, 4, rng);
        auto [b, a] = truncated_svd(m, 2);
        SvdResult s = svd(m);
        const double tail = std::sqrt(s.singular_values[2] * s.singular_values[2] +
                                      s.singular_values[3] * s.singular_values[3]);
        CHECK(frobenius_norm(m - matmul(b, a)) == doctest::Approx(tail).epsilon(1e-9));
    }

    SUBCASE("split convention keeps a row-orthonormal") {
        Matrix m = random_matrix(8, 6, rng);
        auto [b, a] = truncated_svd(m, 3);
        CHECK(frobenius_norm(matmul(a, a.transpose()) - Matrix::identity(3)) <= 1e-8);
    }

    SUBCASE("rank out of range") {
        Matrix m = random_matrix(4, 4, rng);
        CHECK_THROWS_AS(truncated_svd(m, 0), DimensionError);
        CHECK_THROWS_AS(truncated_svd(m, 5), DimensionError);
    }
}

TEST_CASE("Eckart-Young squared-error identity on random matrices") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t rows = 2 + rng.next_below(20);
        const std::size_t cols = 2 + rng.next_below(20);
        const std::size_t k = std::min(rows, cols);
        const std::size_t r = 1 + rng.next_below(k);
        Matrix m = random_matrix(rows, cols, rng);
        auto [b, a] = truncated_svd(m, r);
        SvdResult s = svd(m);
        double tail_sq = 0.0;
        for (std::size_t j = r; j < k; ++j)
            tail_sq += s.singular_values[j] * s.singular_values[j];
        const double err = frobenius_norm(m - matmul(b, a));
        CHECK(err * err == doctest::Approx(tail_sq).epsilon(1e-9));
    }
}

TEST_CASE("matrix text format round-trips") {
    Rng rng(23);
    Matrix m = random_matrix(4, 3, rng);
    std::stringstream ss;
    write_matrix(ss, m);
    Matrix back = read_matrix(ss);
    CHECK(back == m);

    std::stringstream truncated("2 2\n1.0 2.0\n3.0\n");
    CHECK_THROWS_AS(read_matrix(truncated), IoError);
}
