#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <fedlora/errors.hpp>
#include <fedlora/lora.hpp>
#include <fedlora/matrix.hpp>
#include <fedlora/rng.hpp>

namespace fedlora {

struct LabeledDataset {
    std::vector<std::vector<double>> inputs;
    std::vector<std::size_t> labels;
    std::size_t class_count = 0;

    std::size_t size() const { return inputs.size(); }

    void check() const {
        if (inputs.size() != labels.size())
            throw DimensionError("LabeledDataset: inputs/labels length mismatch");
        for (std::size_t y : labels)
            if (y >= class_count)
                throw DimensionError("LabeledDataset: label out of range");
    }
};

struct TrainingConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.005;
    std::size_t local_epochs = 1;
    std::size_t batch_size = 16;
    std::optional<std::size_t> max_steps_per_epoch;
};

// Class-conditional unit-variance Gaussian clouds; class means are random
// unit directions scaled by `separation`. separation 0 makes the classes
// indistinguishable (Bayes accuracy 1/C).
inline LabeledDataset make_synthetic(std::size_t classes, std::size_t per_class,
                                     std::size_t dim, double separation,
                                     std::uint64_t seed) {
    if (classes < 2) throw DimensionError("make_synthetic: need at least 2 classes");
    if (per_class < 1) throw DimensionError("make_synthetic: per_class must be >= 1");
    if (separation < 0.0) throw DimensionError("make_synthetic: separation must be >= 0");
    Rng rng(seed);

    std::vector<std::vector<double>> means(classes, std::vector<double>(dim));
    for (auto& mean : means) {
        double norm = 0.0;
        for (double& v : mean) {
            v = rng.next_gaussian();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : mean) v *= separation / (norm > 0.0 ? norm : 1.0);
    }

    LabeledDataset ds;
    ds.class_count = classes;
    ds.inputs.reserve(classes * per_class);
    ds.labels.reserve(classes * per_class);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t s = 0; s < per_class; ++s) {
            std::vector<double> x(dim);
            for (std::size_t d = 0; d < dim; ++d)
                x[d] = means[c][d] + rng.next_gaussian();
            ds.inputs.push_back(std::move(x));
            ds.labels.push_back(c);
        }
    }
    return ds;
}

// One sample per line: features then label, space separated.
inline void write_dataset(std::ostream& out, const LabeledDataset& ds) {
    out.precision(17);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.inputs[i]) out << v << ' ';
        out << ds.labels[i] << '\n';
    }
}

inline LabeledDataset read_dataset(std::istream& in) {
    LabeledDataset ds;
    std::string line;
    std::size_t max_label = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<double> fields;
        double v;
        while (ls >> v) fields.push_back(v);
        if (fields.size() < 2)
            throw IoError("read_dataset: line with fewer than 2 fields");
        const auto label = static_cast<std::size_t>(fields.back());
        fields.pop_back();
        ds.inputs.push_back(std::move(fields));
        ds.labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    ds.class_count = max_label + 1;
    ds.check();
    return ds;
}

// Frozen random projection (w0, h x d) + LoRA adapter, tanh nonlinearity,
// frozen linear head (C x h). Only the adapter trains.
struct Model {
    Matrix w0;
    Matrix head;
    LoraAdapter adapter;

    std::size_t input_dim() const { return w0.cols(); }
    std::size_t class_count() const { return head.rows(); }
};

inline Model make_model(std::size_t dim, std::size_t hidden, std::size_t classes,
                        std::size_t rank, std::uint64_t seed,
                        double adapter_scaling = 1.0) {
    Rng rng(mix_seed(seed, 101));
    Matrix w0(hidden, dim);
    const double w0_std = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t i = 0; i < hidden; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            w0(i, j) = w0_std * rng.next_gaussian();
    Matrix head(classes, hidden);
    const double head_std = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t i = 0; i < classes; ++i)
        for (std::size_t j = 0; j < hidden; ++j)
            head(i, j) = head_std * rng.next_gaussian();
    LoraAdapter adapter = init_adapter(hidden, dim, rank, mix_seed(seed, 102),
                                       adapter_scaling);
    return Model{std::move(w0), std::move(head), std::move(adapter)};
}

namespace detail {

inline std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
    std::vector<double> y(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    double max = logits[0];
    for (double v : logits) max = std::max(max, v);
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - max);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

} // namespace detail

// logits = head * tanh((w0 + scaling * b * a) * x)
inline std::vector<double> forward(const Model& model, std::span<const double> x) {
    if (x.size() != model.input_dim())
        throw DimensionError("forward: input dim " + std::to_string(x.size()) +
                             " != model dim " + std::to_string(model.input_dim()));
    Matrix merged = model.w0 + delta_w(model.adapter);
    std::vector<double> z = detail::matvec(merged, x);
    for (double& v : z) v = std::tanh(v);
    return detail::matvec(model.head, z);
}

struct AdapterGradients {
    Matrix b_grad;
    Matrix a_grad;
    double loss = 0.0;
};

// Exact gradients of mean cross-entropy over the batch w.r.t. the adapter
// factors only (w0 and head frozen). Batch is a list of indices into ds.
inline AdapterGradients adapter_gradients(const Model& model, const LabeledDataset& ds,
                                          std::span<const std::size_t> batch) {
    if (batch.empty())
        throw DimensionError("adapter_gradients: empty batch");
    const std::size_t hidden = model.w0.rows();
    const std::size_t dim = model.w0.cols();
    const double scale = model.adapter.scaling;

    Matrix merged = model.w0 + delta_w(model.adapter);
    Matrix dw_grad(hidden, dim); // dL/d(merged weight)
    double loss = 0.0;

    for (std::size_t idx : batch) {
        const auto& x = ds.inputs[idx];
        const std::size_t y = ds.labels[idx];
        std::vector<double> z = detail::matvec(merged, x);
        std::vector<double> h(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) h[i] = std::tanh(z[i]);
        std::vector<double> logits = detail::matvec(model.head, h);
        std::vector<double> p = detail::softmax(logits);
        loss += -std::log(std::max(p[y], 1e-300));

        // dL/dlogits = p - onehot(y); dL/dh = head^T (p - y); dL/dz via tanh'
        std::vector<double> dlogits = p;
        dlogits[y] -= 1.0;
        for (std::size_t i = 0; i < hidden; ++i) {
            double dh = 0.0;
            for (std::size_t c = 0; c < dlogits.size(); ++c)
                dh += model.head(c, i) * dlogits[c];
            const double dz = dh * (1.0 - h[i] * h[i]);
            if (dz == 0.0) continue;
            for (std::size_t j = 0; j < dim; ++j)
                dw_grad(i, j) += dz * x[j];
        }
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    loss *= inv_n;
    dw_grad = dw_grad * inv_n;

    // dL/dB = scale * dL/dW * A^T ; dL/dA = scale * B^T * dL/dW
    Matrix b_grad = matmul(dw_grad, model.adapter.a.transpose()) * scale;
    Matrix a_grad = matmul(model.adapter.b.transpose(), dw_grad) * scale;
    return AdapterGradients{std::move(b_grad), std::move(a_grad), loss};
}

} // namespace fedlora
