#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include <fedlora/tasks.hpp>

#include "helpers.hpp"

using namespace fedlora;

namespace {

// Independent forward oracle written against the formula, not the library
// matrix helpers.
std::vector<double> forward_oracle(const Model& model, const std::vector<double>& x) {
    const std::size_t hidden = model.w0.rows();
    std::vector<double> h(hidden, 0.0);
    for (std::size_t i = 0; i < hidden; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < model.w0.cols(); ++j) {
            double delta = 0.0;
            for (std::size_t k = 0; k < model.adapter.rank; ++k)
                delta += model.adapter.b(i, k) * model.adapter.a(k, j);
            z += (model.w0(i, j) + model.adapter.scaling * delta) * x[j];
        }
        h[i] = std::tanh(z);
    }
    std::vector<double> logits(model.head.rows(), 0.0);
    for (std::size_t c = 0; c < model.head.rows(); ++c)
        for (std::size_t i = 0; i < hidden; ++i)
            logits[c] += model.head(c, i) * h[i];
    return logits;
}

double batch_loss(const Model& model, const LabeledDataset& ds,
                  const std::vector<std::size_t>& batch) {
    double loss = 0.0;
    for (std::size_t idx : batch) {
        std::vector<double> logits = forward(model, ds.inputs[idx]);
        double max = logits[0];
        for (double v : logits) max = std::max(max, v);
        double sum = 0.0;
        for (double v : logits) sum += std::exp(v - max);
        loss += -(logits[ds.labels[idx]] - max - std::log(sum));
    }
    return loss / static_cast<double>(batch.size());
}

} // namespace

TEST_CASE("make_synthetic shape, determinism, validation") {
    LabeledDataset ds = make_synthetic(3, 10, 8, 2.0, 1);
    CHECK(ds.size() == 30);
    CHECK(ds.class_count == 3);
    ds.check();

    LabeledDataset again = make_synthetic(3, 10, 8, 2.0, 1);
    CHECK(again.inputs == ds.inputs);
    CHECK(again.labels == ds.labels);

    CHECK_THROWS_AS(make_synthetic(1, 10, 8, 2.0, 1), DimensionError);
    CHECK_THROWS_AS(make_synthetic(3, 0, 8, 2.0, 1), DimensionError);
    CHECK_THROWS_AS(make_synthetic(3, 10, 8, -1.0, 1), DimensionError);
}

TEST_CASE("dataset text format round-trips") {
    LabeledDataset ds = make_synthetic(2, 5, 4, 1.5, 9);
    std::stringstream ss;
    write_dataset(ss, ds);
    LabeledDataset back = read_dataset(ss);
    CHECK(back.labels == ds.labels);
    REQUIRE(back.inputs.size() == ds.inputs.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < ds.inputs[i].size(); ++j)
            CHECK(back.inputs[i][j] == ds.inputs[i][j]);
}

TEST_CASE("forward: zero adapter equals base model, zero input gives zero logits") {
    Model model = make_model(8, 8, 3, 2, 4);
    std::vector<double> x(8, 0.25);

    std::vector<double> with_adapter = forward(model, x);
    Model base = model;
    base.adapter = LoraAdapter(Matrix(8, 2), Matrix(2, 8));
    std::vector<double> without = forward(base, x);
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(with_adapter[c] == doctest::Approx(without[c]).epsilon(1e-15));

    std::vector<double> zeros(8, 0.0);
    for (double v : forward(model, zeros)) CHECK(v == 0.0);

    CHECK_THROWS_AS(forward(model, std::vector<double>(5, 1.0)), DimensionError);
}

TEST_CASE("forward matches the naive oracle") {
    Model model = make_model(10, 10, 4, 3, 5, 2.0);
    Rng rng(6);
    // give the adapter nonzero factors
    model.adapter = testutil::random_adapter(10, 10, 3, rng, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> x(10);
        for (double& v : x) v = rng.next_gaussian();
        std::vector<double> got = forward(model, x);
        std::vector<double> want = forward_oracle(model, x);
        for (std::size_t c = 0; c < got.size(); ++c)
            CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-12));
    }
}

TEST_CASE("adapter gradients match central finite differences") {
    Model model = make_model(8, 8, 3, 2, 7);
    Rng rng(8);
    model.adapter = testutil::random_adapter(8, 8, 2, rng, 1.0);
    LabeledDataset ds = make_synthetic(3, 4, 8, 2.0, 11);
    std::vector<std::size_t> batch(ds.size());
    std::iota(batch.begin(), batch.end(), 0);

    AdapterGradients g = adapter_gradients(model, ds, batch);
    const double h = 1e-5;

    for (int probe = 0; probe < 20; ++probe) {
        const bool check_b = probe % 2 == 0;
        Matrix& target = check_b ? model.adapter.b : model.adapter.a;
        const Matrix& grad = check_b ? g.b_grad : g.a_grad;
        const std::size_t i = rng.next_below(target.rows());
        const std::size_t j = rng.next_below(target.cols());

        const double saved = target(i, j);
        target(i, j) = saved + h;
        const double up = batch_loss(model, ds, batch);
        target(i, j) = saved - h;
        const double down = batch_loss(model, ds, batch);
        target(i, j) = saved;

        const double fd = (up - down) / (2.0 * h);
        const double scale = std::max(std::abs(fd), 1e-8);
        CHECK(std::abs(grad(i, j) - fd) / scale <= 1e-4);
    }
}

TEST_CASE("structural zero: at standard init dL/dA vanishes, dL/dB does not") {
    Model model = make_model(8, 8, 3, 2, 9);
    LabeledDataset ds = make_synthetic(3, 5, 8, 2.0, 13);
    std::vector<std::size_t> batch(ds.size());
    std::iota(batch.begin(), batch.end(), 0);
    AdapterGradients g = adapter_gradients(model, ds, batch);
    CHECK(frobenius_norm(g.a_grad) == 0.0);
    CHECK(frobenius_norm(g.b_grad) > 0.0);
}

TEST_CASE("saturated correct predictions have vanishing gradients") {
    // Rig the model so the true class logit dominates by a huge margin.
    Model model = make_model(4, 4, 2, 1, 10);
    LabeledDataset ds;
    ds.class_count = 2;
    ds.inputs = {{50.0, 0.0, 0.0, 0.0}};
    ds.labels = {0};
    model.w0 = Matrix::identity(4);
    Matrix head(2, 4);
    head(0, 0) = 60.0;
    head(1, 0) = -60.0;
    model.head = head;
    std::vector<std::size_t> batch{0};
    AdapterGradients g = adapter_gradients(model, ds, batch);
    CHECK(frobenius_norm(g.b_grad) <= 1e-6);
    CHECK(frobenius_norm(g.a_grad) <= 1e-6);
}

TEST_CASE("property: one small full-batch step never increases the loss") {
    int failures = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Model model = make_model(6, 6, 3, 2, seed);
        Rng rng(mix_seed(seed, 55));
        model.adapter = testutil::random_adapter(6, 6, 2, rng, 1.0);
        LabeledDataset ds = make_synthetic(3, 6, 6, 1.5, mix_seed(seed, 56));
        std::vector<std::size_t> batch(ds.size());
        std::iota(batch.begin(), batch.end(), 0);

        const double before = batch_loss(model, ds, batch);
        AdapterGradients g = adapter_gradients(model, ds, batch);
        model.adapter.b = model.adapter.b - g.b_grad * 1e-4;
        model.adapter.a = model.adapter.a - g.a_grad * 1e-4;
        const double after = batch_loss(model, ds, batch);
        failures += after > before;
    }
    CHECK(failures == 0);
}
