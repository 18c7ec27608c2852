#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <utility>

#include <fedlora/errors.hpp>
#include <fedlora/matrix.hpp>
#include <fedlora/rng.hpp>

namespace fedlora {

// Low-rank adapter pair for a frozen m x n weight matrix:
// delta_w = scaling * b * a, with b (m x r) and a (r x n).
struct LoraAdapter {
    Matrix b;
    Matrix a;
    std::size_t rank = 0;
    double scaling = 1.0;

    LoraAdapter() = default;

    LoraAdapter(Matrix b_in, Matrix a_in, double scaling_in = 1.0)
        : b(std::move(b_in)), a(std::move(a_in)), rank(b.cols()), scaling(scaling_in) {
        if (b.cols() != a.rows())
            throw DimensionError("LoraAdapter: b.cols " + std::to_string(b.cols()) +
                                 " != a.rows " + std::to_string(a.rows()));
        if (rank > std::min(b.rows(), a.cols()))
            throw DimensionError("LoraAdapter: rank " + std::to_string(rank) +
                                 " exceeds min(m, n)");
    }

    std::size_t out_dim() const { return b.rows(); }
    std::size_t in_dim() const { return a.cols(); }

    // (m + n) * r, the trainable entries of b and a.
    std::size_t trainable_param_count() const {
        return (b.rows() + a.cols()) * rank;
    }
};

// Frozen base weights plus the adapter that modifies them.
struct FrozenLayer {
    Matrix w0;
    LoraAdapter adapter;

    FrozenLayer(Matrix w0_in, LoraAdapter adapter_in)
        : w0(std::move(w0_in)), adapter(std::move(adapter_in)) {
        if (w0.rows() != adapter.out_dim() || w0.cols() != adapter.in_dim())
            throw DimensionError("FrozenLayer: w0 is " + w0.shape_string() +
                                 " but adapter implies " +
                                 std::to_string(adapter.out_dim()) + "x" +
                                 std::to_string(adapter.in_dim()));
    }
};

inline constexpr double kLoraInitStd = 0.02;

// Standard LoRA init: a ~ N(0, 0.02^2), b = 0, so delta_w is zero and the
// merged model equals the base model at round 0.
inline LoraAdapter init_adapter(std::size_t m, std::size_t n, std::size_t r,
                                std::uint64_t seed, double scaling = 1.0) {
    if (r < 1 || r > std::min(m, n))
        throw DimensionError("init_adapter: rank " + std::to_string(r) +
                             " out of range for " + std::to_string(m) + "x" +
                             std::to_string(n));
    Rng rng(seed);
    Matrix a(r, n);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a(i, j) = kLoraInitStd * rng.next_gaussian();
    return LoraAdapter(Matrix(m, r), std::move(a), scaling);
}

inline Matrix delta_w(const LoraAdapter& adapter) {
    return matmul(adapter.b, adapter.a) * adapter.scaling;
}

inline Matrix merge(const FrozenLayer& layer) {
    return layer.w0 + delta_w(layer.adapter);
}

// Checkpoint format: header "rank scaling", then b and a in the matrix format.
inline void write_adapter(std::ostream& out, const LoraAdapter& adapter) {
    out.precision(17);
    out << adapter.rank << ' ' << adapter.scaling << '\n';
    write_matrix(out, adapter.b);
    write_matrix(out, adapter.a);
}

inline LoraAdapter read_adapter(std::istream& in) {
    std::size_t rank = 0;
    double scaling = 1.0;
    if (!(in >> rank >> scaling))
        throw IoError("read_adapter: missing header");
    Matrix b = read_matrix(in);
    Matrix a = read_matrix(in);
    LoraAdapter adapter(std::move(b), std::move(a), scaling);
    if (adapter.rank != rank)
        throw IoError("read_adapter: header rank " + std::to_string(rank) +
                      " does not match matrices");
    return adapter;
}

} // namespace fedlora
