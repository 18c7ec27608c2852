#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <fedlora/config.hpp>
#include <fedlora/errors.hpp>
#include <fedlora/fedsim.hpp>

namespace fedlora {

struct ExperimentSummary {
    double best_eval_accuracy = 0.0;
    std::size_t best_round = 0; // 1-based round index; 0 when there are no rounds
    std::vector<RoundRecord> per_round;
    nlohmann::json config_echo;
};

inline ExperimentSummary summarize(std::vector<RoundRecord> records,
                                   const ExperimentConfig& cfg) {
    ExperimentSummary s;
    s.per_round = std::move(records);
    s.config_echo = cfg.echo();
    for (const auto& rec : s.per_round) {
        if (s.best_round == 0 || rec.global_accuracy > s.best_eval_accuracy) {
            s.best_eval_accuracy = rec.global_accuracy;
            s.best_round = rec.round_index;
        }
    }
    return s;
}

// Trailing mean with prefix warm-up: entry i averages the last
// min(i+1, window) values, so the output has the input's length.
inline std::vector<double> rolling_average(const std::vector<double>& series,
                                           std::size_t window) {
    if (window < 1) throw DimensionError("rolling_average: window must be >= 1");
    std::vector<double> out(series.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        sum += series[i];
        if (i >= window) sum -= series[i - window];
        out[i] = sum / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

namespace detail {

// 9 significant digits, fixed formatting for byte-stable output.
inline std::string fmt9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

} // namespace detail

inline constexpr const char* kMetricsCsvHeader =
    "round,strategy,client_id,accuracy_local,accuracy_global,agg_err_norm";

inline void append_metrics_rows(std::ostream& out,
                                const std::vector<RoundRecord>& records) {
    for (const auto& rec : records) {
        for (std::size_t c = 0; c < rec.per_client_local_accuracy.size(); ++c) {
            out << rec.round_index << ',' << to_string(rec.strategy) << ',' << c << ','
                << detail::fmt9(rec.per_client_local_accuracy[c]) << ','
                << detail::fmt9(rec.global_accuracy) << ','
                << detail::fmt9(rec.aggregation_err_norm) << '\n';
        }
    }
}

inline nlohmann::json summary_json(const ExperimentSummary& summary) {
    nlohmann::json j;
    j["best_eval_accuracy"] = summary.best_eval_accuracy;
    j["best_round"] = summary.best_round;
    j["config"] = summary.config_echo;
    j["per_round"] = nlohmann::json::array();
    for (const auto& rec : summary.per_round) {
        nlohmann::json r;
        r["round"] = rec.round_index;
        r["strategy"] = to_string(rec.strategy);
        r["accuracy_local"] = rec.per_client_local_accuracy;
        r["accuracy_global"] = rec.global_accuracy;
        r["agg_err_norm"] = rec.aggregation_err_norm;
        j["per_round"].push_back(std::move(r));
    }
    return j;
}

// Writes <prefix>.csv (one row per client per round) and <prefix>.json.
inline void write_metrics(const ExperimentSummary& summary, const std::string& prefix) {
    const std::string csv_path = prefix + ".csv";
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("write_metrics: cannot open '" + csv_path + "'");
    csv << kMetricsCsvHeader << '\n';
    append_metrics_rows(csv, summary.per_round);
    if (!csv.good()) throw IoError("write_metrics: write failed for '" + csv_path + "'");

    const std::string json_path = prefix + ".json";
    std::ofstream js(json_path);
    if (!js) throw IoError("write_metrics: cannot open '" + json_path + "'");
    js << summary_json(summary).dump(2) << '\n';
    if (!js.good()) throw IoError("write_metrics: write failed for '" + json_path + "'");
}

} // namespace fedlora
