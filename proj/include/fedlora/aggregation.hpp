#pragma once

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fedlora/errors.hpp>
#include <fedlora/lora.hpp>
#include <fedlora/matrix.hpp>
#include <fedlora/svd.hpp>

namespace fedlora {

// One client's contribution to a round. weight is the client's relative
// sample count; aggregation normalizes over the round's update set.
struct ClientUpdate {
    LoraAdapter adapter;
    double weight = 1.0;
};

// Aggregation result: the adapter redistributed to clients, the exact
// weighted mean of the client increments (kept for diagnostics), and the
// Frobenius norm of delta_w(adapter) - exact_delta.
struct AggregateOutcome {
    LoraAdapter adapter;
    Matrix exact_delta;
    double err_norm = 0.0;
};

namespace detail {

inline void check_updates(std::span<const ClientUpdate> updates) {
    if (updates.empty())
        throw DimensionError("aggregate: empty update set");
    const auto& first = updates.front().adapter;
    for (const auto& u : updates) {
        const auto& ad = u.adapter;
        if (ad.out_dim() != first.out_dim() || ad.in_dim() != first.in_dim() ||
            ad.rank != first.rank)
            throw DimensionError("aggregate: adapter shape mismatch, " +
                                 ad.b.shape_string() + "*" + ad.a.shape_string() +
                                 " vs " + first.b.shape_string() + "*" +
                                 first.a.shape_string());
        if (ad.scaling != first.scaling)
            throw DimensionError("aggregate: adapters disagree on scaling");
        if (!(u.weight > 0.0))
            throw DimensionError("aggregate: non-positive client weight");
    }
}

inline std::vector<double> normalized_weights(std::span<const ClientUpdate> updates) {
    double total = 0.0;
    for (const auto& u : updates) total += u.weight;
    std::vector<double> w;
    w.reserve(updates.size());
    for (const auto& u : updates) w.push_back(u.weight / total);
    return w;
}

// Exact weighted mean of client increments without the shared scaling factor.
inline Matrix weighted_mean_product(std::span<const ClientUpdate> updates,
                                    std::span<const double> weights) {
    Matrix sum(updates.front().adapter.out_dim(), updates.front().adapter.in_dim());
    for (std::size_t k = 0; k < updates.size(); ++k)
        sum = sum + matmul(updates[k].adapter.b, updates[k].adapter.a) * weights[k];
    return sum;
}

} // namespace detail

// Vanilla FedAvg: average b and a separately. The product of the averages is
// not the average of the products, so err_norm is generally positive.
inline AggregateOutcome aggregate_fedavg(std::span<const ClientUpdate> updates) {
    detail::check_updates(updates);
    const std::vector<double> w = detail::normalized_weights(updates);
    const auto& proto = updates.front().adapter;

    Matrix b_bar(proto.b.rows(), proto.b.cols());
    Matrix a_bar(proto.a.rows(), proto.a.cols());
    for (std::size_t k = 0; k < updates.size(); ++k) {
        b_bar = b_bar + updates[k].adapter.b * w[k];
        a_bar = a_bar + updates[k].adapter.a * w[k];
    }
    LoraAdapter result(std::move(b_bar), std::move(a_bar), proto.scaling);
    Matrix exact = detail::weighted_mean_product(updates, w) * proto.scaling;
    const double err = frobenius_norm(delta_w(result) - exact);
    return AggregateOutcome{std::move(result), std::move(exact), err};
}

// FFA: a is frozen and identical across clients; only b is averaged.
// Aggregation is exact by linearity. Any client whose a differs from the
// broadcast frozen_a has violated the protocol.
inline AggregateOutcome aggregate_ffa(std::span<const ClientUpdate> updates,
                                      const Matrix& frozen_a) {
    detail::check_updates(updates);
    for (std::size_t k = 0; k < updates.size(); ++k)
        if (updates[k].adapter.a != frozen_a)
            throw ProtocolError("aggregate_ffa: client " + std::to_string(k) +
                                " modified the frozen a matrix");
    const std::vector<double> w = detail::normalized_weights(updates);
    const auto& proto = updates.front().adapter;

    Matrix b_bar(proto.b.rows(), proto.b.cols());
    for (std::size_t k = 0; k < updates.size(); ++k)
        b_bar = b_bar + updates[k].adapter.b * w[k];
    LoraAdapter result(std::move(b_bar), frozen_a, proto.scaling);
    Matrix exact = delta_w(result);
    return AggregateOutcome{std::move(result), std::move(exact), 0.0};
}

// Full Rank Aggregation: form the exact weighted mean of the increments via
// block concatenation (weights applied once, on the b blocks), then
// re-decompose to rank r with a truncated SVD. err_norm is the Frobenius
// norm of the discarded singular-value tail, the rank-r optimum.
inline AggregateOutcome aggregate_fra(std::span<const ClientUpdate> updates,
                                      std::size_t r) {
    detail::check_updates(updates);
    const auto& proto = updates.front().adapter;
    const std::size_t m = proto.out_dim(), n = proto.in_dim();
    if (r < 1 || r > std::min(m, n))
        throw DimensionError("aggregate_fra: rank " + std::to_string(r) +
                             " out of range for " + std::to_string(m) + "x" +
                             std::to_string(n));
    const std::vector<double> w = detail::normalized_weights(updates);

    // b_hat = [w_1 B_1 | ... | w_K B_K], a_hat = [A_1; ...; A_K]
    const std::size_t rk = proto.rank;
    Matrix b_hat(m, rk * updates.size());
    Matrix a_hat(rk * updates.size(), n);
    for (std::size_t k = 0; k < updates.size(); ++k) {
        const auto& ad = updates[k].adapter;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < rk; ++j)
                b_hat(i, k * rk + j) = w[k] * ad.b(i, j);
        for (std::size_t i = 0; i < rk; ++i)
            for (std::size_t j = 0; j < n; ++j)
                a_hat(k * rk + i, j) = ad.a(i, j);
    }
    Matrix mean_product = matmul(b_hat, a_hat);
    auto [b, a] = truncated_svd(mean_product, r);
    LoraAdapter result(std::move(b), std::move(a), proto.scaling);
    Matrix exact = mean_product * proto.scaling;
    const double err = frobenius_norm(delta_w(result) - exact);
    return AggregateOutcome{std::move(result), std::move(exact), err};
}

// Closed-form FedAvg error for the symmetric two-client case:
// exact_delta - delta_w(fedavg result) = 0.25 * scaling * (B1-B2)(A1-A2).
// (Stated with the operands in the order that makes the product conform.)
inline Matrix fedavg_error(std::span<const ClientUpdate> updates) {
    if (updates.size() != 2)
        throw DimensionError("fedavg_error: closed form requires exactly 2 updates");
    detail::check_updates(updates);
    const std::vector<double> w = detail::normalized_weights(updates);
    if (std::abs(w[0] - 0.5) > 1e-12 || std::abs(w[1] - 0.5) > 1e-12)
        throw DimensionError("fedavg_error: closed form requires equal weights");
    const auto& u1 = updates[0].adapter;
    const auto& u2 = updates[1].adapter;
    return matmul(u1.b - u2.b, u1.a - u2.a) * (0.25 * u1.scaling);
}

// Frobenius norm of the singular-value tail discarded by rank-r truncation.
inline double fra_truncation_error(const Matrix& exact_delta, std::size_t r) {
    const std::size_t k = std::min(exact_delta.rows(), exact_delta.cols());
    if (r < 1 || r > k)
        throw DimensionError("fra_truncation_error: rank " + std::to_string(r) +
                             " out of range for " + exact_delta.shape_string());
    SvdResult s = svd(exact_delta);
    double sum = 0.0;
    for (std::size_t j = r; j < s.singular_values.size(); ++j)
        sum += s.singular_values[j] * s.singular_values[j];
    return std::sqrt(sum);
}

// Per-round trace for offline analysis: exact delta norm, error norm, then
// the singular-value spectrum one value per line.
inline void write_round_trace(std::ostream& out, const AggregateOutcome& outcome) {
    out.precision(17);
    out << "exact_delta_norm " << frobenius_norm(outcome.exact_delta) << '\n';
    out << "err_norm " << outcome.err_norm << '\n';
    out << "spectrum\n";
    for (double d : svd(outcome.exact_delta).singular_values) out << d << '\n';
}

} // namespace fedlora
