#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>

#include <fedlora/aggregation.hpp>
#include <fedlora/errors.hpp>
#include <fedlora/lora.hpp>
#include <fedlora/matrix.hpp>
#include <fedlora/rng.hpp>
#include <fedlora/svd.hpp>

namespace fedlora {

enum class NoiseDistribution { Gaussian, Laplace };

// Additive noise parameters. scale is the std for Gaussian, the b parameter
// for Laplace. Named scale rather than epsilon: no privacy-budget accounting
// is performed here, only noise-shape behaviour is modeled.
struct NoiseSpec {
    NoiseDistribution distribution = NoiseDistribution::Gaussian;
    double scale = 1.0;
    std::uint64_t seed = 0;
};

inline Matrix noise_matrix(std::size_t rows, std::size_t cols, const NoiseSpec& spec) {
    if (!(spec.scale > 0.0))
        throw DimensionError("noise_matrix: scale must be positive");
    Rng rng(spec.seed);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            m(i, j) = spec.distribution == NoiseDistribution::Gaussian
                          ? spec.scale * rng.next_gaussian()
                          : rng.next_laplace(spec.scale);
    return m;
}

// Per-adapter injection (the scheme FRA argues against): independent noise on
// b and a. The returned product_error = delta_w(noisy) - delta_w(adapter)
// carries the cross terms and the quadratic noise-product term, which is why
// the error is no longer Gaussian.
inline std::pair<LoraAdapter, Matrix> dp_per_adapter(const LoraAdapter& adapter,
                                                     const NoiseSpec& spec) {
    NoiseSpec spec_b = spec;
    spec_b.seed = mix_seed(spec.seed, 1);
    NoiseSpec spec_a = spec;
    spec_a.seed = mix_seed(spec.seed, 2);
    LoraAdapter noisy(adapter.b + noise_matrix(adapter.b.rows(), adapter.b.cols(), spec_b),
                      adapter.a + noise_matrix(adapter.a.rows(), adapter.a.cols(), spec_a),
                      adapter.scaling);
    Matrix product_error = delta_w(noisy) - delta_w(adapter);
    return {std::move(noisy), std::move(product_error)};
}

// Post-aggregation injection (the FRA-compatible scheme): noise is added once
// to the exact aggregated increment, then the sum is re-decomposed to rank r.
// At full rank the noise survives additively with its distribution intact.
// The outcome's exact_delta field holds the noisy target, so err_norm is the
// truncation residual alone.
inline AggregateOutcome dp_post_aggregation(const Matrix& exact_delta, std::size_t r,
                                            const NoiseSpec& spec) {
    const std::size_t k = std::min(exact_delta.rows(), exact_delta.cols());
    if (r < 1 || r > k)
        throw DimensionError("dp_post_aggregation: rank " + std::to_string(r) +
                             " out of range for " + exact_delta.shape_string());
    Matrix noisy = exact_delta +
                   noise_matrix(exact_delta.rows(), exact_delta.cols(), spec);
    auto [b, a] = truncated_svd(noisy, r);
    LoraAdapter result(std::move(b), std::move(a), 1.0);
    const double err = frobenius_norm(delta_w(result) - noisy);
    return AggregateOutcome{std::move(result), std::move(noisy), err};
}

} // namespace fedlora
