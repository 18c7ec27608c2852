#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include <fedlora/errors.hpp>
#include <fedlora/matrix.hpp>
#include <fedlora/privacy.hpp>
#include <fedlora/tasks.hpp>

namespace fedlora {

enum class Strategy { FedAvg, FFA, FRA };
enum class PartitionKind { IID, LabelSkew };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::FedAvg: return "fedavg";
        case Strategy::FFA: return "ffa";
        case Strategy::FRA: return "fra";
    }
    return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "fedavg") return Strategy::FedAvg;
    if (s == "ffa") return Strategy::FFA;
    if (s == "fra") return Strategy::FRA;
    throw ConfigError("strategy: expected fedavg|ffa|fra, got '" + s + "'");
}

struct DatasetSpec {
    std::size_t classes = 3;
    std::size_t per_class = 200;
    std::size_t dim = 64;
    double separation = 6.0;
    std::size_t eval_per_class = 100;
    std::string import_path; // when set, overrides synthetic generation
};

struct ExperimentConfig {
    Strategy strategy = Strategy::FedAvg;
    std::size_t clients = 2;
    std::size_t rank = 4;
    std::size_t rounds = 30;
    PartitionKind partition = PartitionKind::IID;
    std::vector<std::vector<double>> label_weights; // labels x clients, LabelSkew only
    std::optional<NoiseSpec> noise;
    TrainingConfig training;
    DatasetSpec dataset;
    double adapter_scaling = 1.0;
    std::uint64_t seed = 42;
    std::string out = "fedlora";
    std::size_t threads = 1;

    void validate() const {
        if (clients < 1) throw ConfigError("clients: must be >= 1");
        if (rank < 1) throw ConfigError("rank: must be >= 1");
        if (!(training.learning_rate > 0.0))
            throw ConfigError("training.learning_rate: must be > 0");
        if (training.weight_decay < 0.0)
            throw ConfigError("training.weight_decay: must be >= 0");
        if (training.batch_size < 1)
            throw ConfigError("training.batch_size: must be >= 1");
        if (dataset.classes < 2) throw ConfigError("dataset.classes: must be >= 2");
        if (threads < 1) throw ConfigError("threads: must be >= 1");
        if (noise && !(noise->scale > 0.0))
            throw ConfigError("noise.scale: must be > 0");
        if (partition == PartitionKind::LabelSkew) {
            if (label_weights.empty())
                throw ConfigError("label_weights: required for label-skew partition");
            for (const auto& row : label_weights) {
                if (row.size() != clients)
                    throw ConfigError("label_weights: each row needs one entry per client");
                double sum = 0.0;
                for (double w : row) {
                    if (w < 0.0 || w > 1.0)
                        throw ConfigError("label_weights: entries must lie in [0,1]");
                    sum += w;
                }
                if (std::abs(sum - 1.0) > 1e-9)
                    throw ConfigError("label_weights: each label row must sum to 1");
            }
        }
    }

    nlohmann::json echo() const {
        nlohmann::json j;
        j["strategy"] = to_string(strategy);
        j["clients"] = clients;
        j["rank"] = rank;
        j["rounds"] = rounds;
        j["partition"] = partition == PartitionKind::IID ? "iid" : "label-skew";
        if (!label_weights.empty()) j["label_weights"] = label_weights;
        if (noise) {
            j["noise.distribution"] =
                noise->distribution == NoiseDistribution::Gaussian ? "gaussian" : "laplace";
            j["noise.scale"] = noise->scale;
            j["noise.seed"] = noise->seed;
        }
        j["training.learning_rate"] = training.learning_rate;
        j["training.weight_decay"] = training.weight_decay;
        j["training.local_epochs"] = training.local_epochs;
        j["training.batch_size"] = training.batch_size;
        if (training.max_steps_per_epoch)
            j["training.max_steps_per_epoch"] = *training.max_steps_per_epoch;
        j["dataset.classes"] = dataset.classes;
        j["dataset.per_class"] = dataset.per_class;
        j["dataset.dim"] = dataset.dim;
        j["dataset.separation"] = dataset.separation;
        j["dataset.eval_per_class"] = dataset.eval_per_class;
        if (!dataset.import_path.empty()) j["dataset.import_path"] = dataset.import_path;
        j["adapter_scaling"] = adapter_scaling;
        j["seed"] = seed;
        j["out"] = out;
        j["threads"] = threads;
        return j;
    }
};

namespace detail {

inline PartitionKind partition_from_string(const std::string& s) {
    if (s == "iid") return PartitionKind::IID;
    if (s == "label-skew") return PartitionKind::LabelSkew;
    throw ConfigError("partition: expected iid|label-skew, got '" + s + "'");
}

inline NoiseDistribution noise_dist_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseDistribution::Gaussian;
    if (s == "laplace") return NoiseDistribution::Laplace;
    throw ConfigError("noise.distribution: expected gaussian|laplace, got '" + s + "'");
}

template <typename T>
T positive_int(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number_unsigned() && !v.is_number_integer())
        throw ConfigError(key + ": expected an integer");
    auto n = v.get<long long>();
    if (n < 0) throw ConfigError(key + ": must be non-negative");
    return static_cast<T>(n);
}

// Config files are flat JSON objects with dotted section keys,
// e.g. {"training.learning_rate": 1e-4}.
inline void apply_json_key(ExperimentConfig& cfg, const std::string& key,
                           const nlohmann::json& v) {
    auto ensure_noise = [&]() -> NoiseSpec& {
        if (!cfg.noise) cfg.noise = NoiseSpec{};
        return *cfg.noise;
    };
    if (key == "strategy") cfg.strategy = strategy_from_string(v.get<std::string>());
    else if (key == "clients") cfg.clients = positive_int<std::size_t>(v, key);
    else if (key == "rank") cfg.rank = positive_int<std::size_t>(v, key);
    else if (key == "rounds") cfg.rounds = positive_int<std::size_t>(v, key);
    else if (key == "partition") cfg.partition = partition_from_string(v.get<std::string>());
    else if (key == "label_weights") cfg.label_weights = v.get<std::vector<std::vector<double>>>();
    else if (key == "noise.distribution") ensure_noise().distribution = noise_dist_from_string(v.get<std::string>());
    else if (key == "noise.scale") ensure_noise().scale = v.get<double>();
    else if (key == "noise.seed") ensure_noise().seed = positive_int<std::uint64_t>(v, key);
    else if (key == "training.learning_rate") cfg.training.learning_rate = v.get<double>();
    else if (key == "training.weight_decay") cfg.training.weight_decay = v.get<double>();
    else if (key == "training.local_epochs") cfg.training.local_epochs = positive_int<std::size_t>(v, key);
    else if (key == "training.batch_size") cfg.training.batch_size = positive_int<std::size_t>(v, key);
    else if (key == "training.max_steps_per_epoch") cfg.training.max_steps_per_epoch = positive_int<std::size_t>(v, key);
    else if (key == "dataset.classes") cfg.dataset.classes = positive_int<std::size_t>(v, key);
    else if (key == "dataset.per_class") cfg.dataset.per_class = positive_int<std::size_t>(v, key);
    else if (key == "dataset.dim") cfg.dataset.dim = positive_int<std::size_t>(v, key);
    else if (key == "dataset.separation") cfg.dataset.separation = v.get<double>();
    else if (key == "dataset.eval_per_class") cfg.dataset.eval_per_class = positive_int<std::size_t>(v, key);
    else if (key == "dataset.import_path") cfg.dataset.import_path = v.get<std::string>();
    else if (key == "adapter_scaling") cfg.adapter_scaling = v.get<double>();
    else if (key == "seed") cfg.seed = positive_int<std::uint64_t>(v, key);
    else if (key == "out") cfg.out = v.get<std::string>();
    else if (key == "threads") cfg.threads = positive_int<std::size_t>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
}

} // namespace detail

// Precedence: CLI flags > config-file keys > defaults.
inline ExperimentConfig parse_config(const std::vector<std::string>& args) {
    ExperimentConfig cfg;

    if (const char* env_threads = std::getenv("FEDLORA_THREADS")) {
        try {
            cfg.threads = std::stoul(env_threads);
        } catch (const std::exception&) {
            throw ConfigError("FEDLORA_THREADS: expected an integer");
        }
    }

    // Locate --config first so flags can override file keys.
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw ConfigError("--config: missing path");
            config_path = args[i + 1];
        }
    }
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("--config: cannot open '" + config_path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("--config: invalid JSON in '" + config_path + "': " + e.what());
        }
        if (!j.is_object()) throw ConfigError("--config: expected a JSON object");
        for (const auto& [key, value] : j.items()) {
            try {
                detail::apply_json_key(cfg, key, value);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(key + ": " + e.what());
            }
        }
    }

    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& flag = args[i];
        auto value = [&]() -> const std::string& {
            if (i + 1 >= args.size()) throw ConfigError(flag + ": missing value");
            return args[++i];
        };
        try {
            if (flag == "--config") { value(); }
            else if (flag == "--strategy") cfg.strategy = strategy_from_string(value());
            else if (flag == "--clients") cfg.clients = std::stoul(value());
            else if (flag == "--rank") cfg.rank = std::stoul(value());
            else if (flag == "--rounds") cfg.rounds = std::stoul(value());
            else if (flag == "--partition") cfg.partition = detail::partition_from_string(value());
            else if (flag == "--noise-scale") {
                if (!cfg.noise) cfg.noise = NoiseSpec{};
                cfg.noise->scale = std::stod(value());
            } else if (flag == "--noise-dist") {
                if (!cfg.noise) cfg.noise = NoiseSpec{};
                cfg.noise->distribution = detail::noise_dist_from_string(value());
            } else if (flag == "--seed") cfg.seed = std::stoull(value());
            else if (flag == "--out") cfg.out = value();
            else if (flag == "--threads") cfg.threads = std::stoul(value());
            else throw ConfigError("unknown flag '" + flag + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError(flag + ": invalid numeric value");
        } catch (const std::out_of_range&) {
            throw ConfigError(flag + ": value out of range");
        }
    }

    cfg.validate();
    return cfg;
}

} // namespace fedlora
