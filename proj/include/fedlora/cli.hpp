#pragma once

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include <fedlora/config.hpp>
#include <fedlora/errors.hpp>
#include <fedlora/fedsim.hpp>
#include <fedlora/reporting.hpp>

namespace fedlora::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitIo = 4;

inline std::string summary_line(const ExperimentSummary& s) {
    return "strategy=" + s.config_echo["strategy"].get<std::string>() +
           " best_accuracy=" + detail::fmt9(s.best_eval_accuracy) +
           " best_round=" + std::to_string(s.best_round);
}

// `run`: one experiment, <out>.csv + <out>.json.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
    FederationResult result = run_federation(cfg);
    ExperimentSummary summary = summarize(std::move(result.records), cfg);
    write_metrics(summary, cfg.out);
    return summary;
}

// `compare`: all three strategies on identical seeds and partitions,
// merged into <out>.csv plus a per-strategy JSON array in <out>.json.
inline std::vector<ExperimentSummary> run_compare(const ExperimentConfig& cfg) {
    std::vector<ExperimentSummary> summaries;
    for (Strategy s : {Strategy::FedAvg, Strategy::FFA, Strategy::FRA}) {
        ExperimentConfig variant = cfg;
        variant.strategy = s;
        FederationResult result = run_federation(variant);
        summaries.push_back(summarize(std::move(result.records), variant));
    }

    const std::string csv_path = cfg.out + ".csv";
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("compare: cannot open '" + csv_path + "'");
    csv << kMetricsCsvHeader << '\n';
    for (const auto& summary : summaries) append_metrics_rows(csv, summary.per_round);
    if (!csv.good()) throw IoError("compare: write failed for '" + csv_path + "'");

    nlohmann::json j = nlohmann::json::array();
    for (const auto& summary : summaries) j.push_back(summary_json(summary));
    const std::string json_path = cfg.out + ".json";
    std::ofstream js(json_path);
    if (!js) throw IoError("compare: cannot open '" + json_path + "'");
    js << j.dump(2) << '\n';
    if (!js.good()) throw IoError("compare: write failed for '" + json_path + "'");
    return summaries;
}

inline void print_usage(std::ostream& out) {
    out << "usage: fedlora [run|compare] [flags]\n"
           "flags: --strategy fedavg|ffa|fra  --clients K  --rank R  --rounds N\n"
           "       --partition iid|label-skew  --noise-scale S  --noise-dist gaussian|laplace\n"
           "       --seed S  --config FILE  --out PREFIX  --threads T\n"
           "env:   FEDLORA_THREADS (fallback for --threads)\n";
}

inline int dispatch(const std::vector<std::string>& args) {
    std::string command = "run";
    std::size_t first_flag = 0;
    if (!args.empty() && !args[0].starts_with("--")) {
        command = args[0];
        first_flag = 1;
    }
    if (command == "help" || command == "--help") {
        print_usage(std::cout);
        return kExitOk;
    }
    if (command != "run" && command != "compare") {
        std::cerr << "fedlora: unknown command '" << command << "'\n";
        print_usage(std::cerr);
        return kExitConfig;
    }

    try {
        ExperimentConfig cfg =
            parse_config({args.begin() + static_cast<long>(first_flag), args.end()});
        if (command == "run") {
            ExperimentSummary summary = run_experiment(cfg);
            std::cout << summary_line(summary) << '\n';
        } else {
            for (const auto& summary : run_compare(cfg))
                std::cout << summary_line(summary) << '\n';
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "fedlora: config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "fedlora: i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "fedlora: runtime error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

} // namespace fedlora::cli
