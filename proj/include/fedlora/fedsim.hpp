#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <fedlora/aggregation.hpp>
#include <fedlora/config.hpp>
#include <fedlora/errors.hpp>
#include <fedlora/lora.hpp>
#include <fedlora/privacy.hpp>
#include <fedlora/rng.hpp>
#include <fedlora/tasks.hpp>

namespace fedlora {

struct PartitionPlan {
    PartitionKind kind = PartitionKind::IID;
    std::size_t num_clients = 1;
    std::vector<std::vector<double>> label_weights; // labels x clients
    std::uint64_t seed = 0;
};

// Split a dataset into per-client shards of sample indices. Shards are
// disjoint and cover the dataset.
inline std::vector<std::vector<std::size_t>> partition(const LabeledDataset& ds,
                                                       const PartitionPlan& plan) {
    if (ds.size() == 0) throw DimensionError("partition: empty dataset");
    if (plan.num_clients < 1) throw DimensionError("partition: need at least 1 client");
    if (plan.num_clients > ds.size())
        throw DimensionError("partition: more clients (" +
                             std::to_string(plan.num_clients) + ") than samples (" +
                             std::to_string(ds.size()) + ")");

    std::vector<std::vector<std::size_t>> shards(plan.num_clients);
    if (plan.kind == PartitionKind::IID) {
        std::vector<std::size_t> order(ds.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(plan.seed);
        rng.shuffle(order);
        // Equal split; the first (size % K) shards take one extra item.
        const std::size_t base = ds.size() / plan.num_clients;
        const std::size_t extra = ds.size() % plan.num_clients;
        std::size_t pos = 0;
        for (std::size_t c = 0; c < plan.num_clients; ++c) {
            const std::size_t take = base + (c < extra ? 1 : 0);
            shards[c].assign(order.begin() + pos, order.begin() + pos + take);
            pos += take;
        }
        return shards;
    }

    if (plan.label_weights.size() != ds.class_count)
        throw DimensionError("partition: label_weights rows (" +
                             std::to_string(plan.label_weights.size()) +
                             ") != label count (" + std::to_string(ds.class_count) + ")");
    for (std::size_t label = 0; label < ds.class_count; ++label) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.labels[i] == label) pool.push_back(i);
        Rng rng(mix_seed(plan.seed, label));
        rng.shuffle(pool);

        // Largest-remainder allocation of this label's samples.
        const auto& weights = plan.label_weights[label];
        std::vector<std::size_t> counts(plan.num_clients);
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < plan.num_clients; ++c) {
            const double target = weights[c] * static_cast<double>(pool.size());
            counts[c] = static_cast<std::size_t>(target);
            assigned += counts[c];
            remainders.push_back({target - static_cast<double>(counts[c]), c});
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t k = 0; assigned < pool.size(); ++k, ++assigned)
            ++counts[remainders[k % plan.num_clients].second];

        std::size_t pos = 0;
        for (std::size_t c = 0; c < plan.num_clients; ++c) {
            shards[c].insert(shards[c].end(), pool.begin() + pos, pool.begin() + pos + counts[c]);
            pos += counts[c];
        }
    }
    return shards;
}

struct ClientState {
    std::size_t id = 0;
    std::vector<std::size_t> shard; // indices into the shared training dataset
    std::size_t sample_count = 0;
    LoraAdapter adapter;
    Rng rng{0};
};

struct RoundRecord {
    std::size_t round_index = 0; // 1-based
    std::vector<double> per_client_local_accuracy;
    double global_accuracy = 0.0;
    double aggregation_err_norm = 0.0;
    Strategy strategy = Strategy::FedAvg;
    std::int64_t wall_millis = 0;
};

// Minibatch SGD on the adapter factors only. Weight decay is decoupled from
// the gradient step: params shrink by (1 - wd) each step regardless of lr.
// With train_a false (FFA) the a matrix is left untouched.
inline ClientUpdate local_train(ClientState& client, const LoraAdapter& global,
                                const Model& base, const LabeledDataset& ds,
                                const TrainingConfig& cfg, bool train_a = true) {
    if (client.shard.empty())
        throw DimensionError("local_train: client " + std::to_string(client.id) +
                             " has an empty shard");
    client.adapter = global;
    Model model{base.w0, base.head, client.adapter};

    const double lr = cfg.learning_rate;
    const double decay = 1.0 - cfg.weight_decay;
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::vector<std::size_t> order = client.shard;
        client.rng.shuffle(order);
        std::size_t steps = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            if (cfg.max_steps_per_epoch && steps >= *cfg.max_steps_per_epoch) break;
            const std::size_t batch_end = std::min(pos + cfg.batch_size, order.size());
            AdapterGradients g = adapter_gradients(
                model, ds, std::span(order).subspan(pos, batch_end - pos));

            auto& b = model.adapter.b;
            for (std::size_t k = 0; k < b.size(); ++k) {
                double v = b.data()[k] * decay - lr * g.b_grad.data()[k];
                b(k / b.cols(), k % b.cols()) = v;
            }
            if (train_a) {
                auto& a = model.adapter.a;
                for (std::size_t k = 0; k < a.size(); ++k) {
                    double v = a.data()[k] * decay - lr * g.a_grad.data()[k];
                    a(k / a.cols(), k % a.cols()) = v;
                }
            }
            ++steps;
        }
    }
    client.adapter = model.adapter;
    return ClientUpdate{client.adapter, static_cast<double>(client.sample_count)};
}

// Fraction of argmax-correct predictions.
inline double evaluate(const Model& model, const LabeledDataset& ds) {
    if (ds.size() == 0) throw DimensionError("evaluate: empty eval split");
    const Matrix merged = model.w0 + delta_w(model.adapter);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::vector<double> z = detail::matvec(merged, ds.inputs[i]);
        for (double& v : z) v = std::tanh(v);
        std::vector<double> logits = detail::matvec(model.head, z);
        std::size_t argmax = 0;
        for (std::size_t c = 1; c < logits.size(); ++c)
            if (logits[c] > logits[argmax]) argmax = c;
        correct += argmax == ds.labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

struct FederationResult {
    std::vector<RoundRecord> records;
    LoraAdapter final_adapter;
    Model base_model; // frozen parts plus final adapter
};

namespace detail {

// Train + eval split sharing one generator seed so class means coincide.
struct DataSplits {
    LabeledDataset train;
    LabeledDataset eval;
};

inline DataSplits make_splits(const DatasetSpec& spec, std::uint64_t seed) {
    if (!spec.import_path.empty()) {
        std::ifstream in(spec.import_path);
        if (!in) throw IoError("dataset import: cannot open '" + spec.import_path + "'");
        LabeledDataset full = read_dataset(in);
        // Deterministic holdout: every 5th sample goes to eval.
        DataSplits splits;
        splits.train.class_count = splits.eval.class_count = full.class_count;
        for (std::size_t i = 0; i < full.size(); ++i) {
            auto& dst = (i % 5 == 4) ? splits.eval : splits.train;
            dst.inputs.push_back(full.inputs[i]);
            dst.labels.push_back(full.labels[i]);
        }
        if (splits.eval.size() == 0 || splits.train.size() == 0)
            throw ConfigError("dataset import: too few samples to split");
        return splits;
    }
    LabeledDataset full = make_synthetic(spec.classes, spec.per_class + spec.eval_per_class,
                                         spec.dim, spec.separation, seed);
    DataSplits splits;
    splits.train.class_count = splits.eval.class_count = spec.classes;
    // Samples are grouped by class: first per_class of each group train.
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const std::size_t base = c * (spec.per_class + spec.eval_per_class);
        for (std::size_t s = 0; s < spec.per_class; ++s) {
            splits.train.inputs.push_back(full.inputs[base + s]);
            splits.train.labels.push_back(c);
        }
        for (std::size_t s = spec.per_class; s < spec.per_class + spec.eval_per_class; ++s) {
            splits.eval.inputs.push_back(full.inputs[base + s]);
            splits.eval.labels.push_back(c);
        }
    }
    return splits;
}

inline void add_factor_noise(Matrix& factor, const NoiseSpec& spec) {
    factor = factor + noise_matrix(factor.rows(), factor.cols(), spec);
}

} // namespace detail

// Executes the configured number of communication rounds:
// broadcast -> local training on every client (optionally threaded) ->
// aggregation -> optional noise -> shared-split evaluation.
// Deterministic under fixed seeds for any thread count.
inline FederationResult run_federation(const ExperimentConfig& cfg) {
    cfg.validate();
    detail::DataSplits data = detail::make_splits(cfg.dataset, mix_seed(cfg.seed, 7));

    PartitionPlan plan{cfg.partition, cfg.clients, cfg.label_weights, mix_seed(cfg.seed, 9)};
    std::vector<std::vector<std::size_t>> shards = partition(data.train, plan);

    Model base = make_model(cfg.dataset.dim, cfg.dataset.dim, data.train.class_count,
                            cfg.rank, cfg.seed, cfg.adapter_scaling);
    LoraAdapter global = base.adapter;
    const Matrix frozen_a = global.a; // FFA: broadcast once, never trained

    std::vector<ClientState> clients(cfg.clients);
    for (std::size_t c = 0; c < cfg.clients; ++c) {
        clients[c].id = c;
        clients[c].shard = std::move(shards[c]);
        clients[c].sample_count = clients[c].shard.size();
        clients[c].adapter = global;
        clients[c].rng = Rng(mix_seed(cfg.seed, 1000 + c));
        if (clients[c].shard.empty())
            throw DimensionError("run_federation: client " + std::to_string(c) +
                                 " received an empty shard");
    }

    const bool train_a = cfg.strategy != Strategy::FFA;
    const std::size_t workers = std::min<std::size_t>(cfg.threads, cfg.clients);

    FederationResult result;
    result.records.reserve(cfg.rounds);
    for (std::size_t round = 1; round <= cfg.rounds; ++round) {
        const auto t0 = std::chrono::steady_clock::now();

        std::vector<ClientUpdate> updates(cfg.clients);
        std::vector<std::exception_ptr> failures(cfg.clients);
        auto train_client = [&](std::size_t c) {
            try {
                updates[c] = local_train(clients[c], global, base, data.train,
                                         cfg.training, train_a);
            } catch (...) {
                failures[c] = std::current_exception();
            }
        };
        if (workers <= 1) {
            for (std::size_t c = 0; c < cfg.clients; ++c) train_client(c);
        } else {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < workers; ++t)
                pool.emplace_back([&, t] {
                    for (std::size_t c = t; c < cfg.clients; c += workers) train_client(c);
                });
            for (auto& th : pool) th.join();
        }
        // No partial aggregation: any client failure aborts the round.
        for (auto& failure : failures)
            if (failure) std::rethrow_exception(failure);

        RoundRecord rec;
        rec.round_index = round;
        rec.strategy = cfg.strategy;
        rec.per_client_local_accuracy.reserve(cfg.clients);
        for (const auto& client : clients) {
            Model local{base.w0, base.head, client.adapter};
            rec.per_client_local_accuracy.push_back(evaluate(local, data.eval));
        }

        AggregateOutcome outcome = [&] {
            switch (cfg.strategy) {
                case Strategy::FFA: return aggregate_ffa(updates, frozen_a);
                case Strategy::FRA: return aggregate_fra(updates, cfg.rank);
                default: return aggregate_fedavg(updates);
            }
        }();

        if (cfg.noise) {
            NoiseSpec round_spec = *cfg.noise;
            const std::uint64_t root =
                round_spec.seed != 0 ? round_spec.seed : mix_seed(cfg.seed, 13);
            round_spec.seed = mix_seed(root, round);
            if (cfg.strategy == Strategy::FRA) {
                // Noise on the full-rank aggregate before re-decomposition.
                Matrix scaled = outcome.exact_delta;
                AggregateOutcome noisy = dp_post_aggregation(scaled, cfg.rank, round_spec);
                // Fold the configured scaling back into the factors.
                noisy.adapter = LoraAdapter(noisy.adapter.b * (1.0 / cfg.adapter_scaling),
                                            noisy.adapter.a, cfg.adapter_scaling);
                outcome = std::move(noisy);
            } else {
                NoiseSpec spec_b = round_spec;
                spec_b.seed = mix_seed(round_spec.seed, 1);
                detail::add_factor_noise(outcome.adapter.b, spec_b);
                if (cfg.strategy == Strategy::FedAvg) {
                    NoiseSpec spec_a = round_spec;
                    spec_a.seed = mix_seed(round_spec.seed, 2);
                    detail::add_factor_noise(outcome.adapter.a, spec_a);
                }
                outcome.err_norm = frobenius_norm(delta_w(outcome.adapter) - outcome.exact_delta);
            }
        }

        global = outcome.adapter;
        rec.aggregation_err_norm = outcome.err_norm;

        Model merged{base.w0, base.head, global};
        rec.global_accuracy = evaluate(merged, data.eval);

        rec.wall_millis = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        result.records.push_back(std::move(rec));
    }

    result.final_adapter = global;
    result.base_model = Model{base.w0, base.head, global};
    return result;
}

} // namespace fedlora
