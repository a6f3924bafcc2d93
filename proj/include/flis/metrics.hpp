#pragma once

// Evaluation quantities derived from round records: average local test
// accuracy, rounds / communication cost to a target, clustering-error
// curves, and beta x local-epoch sweeps.

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "flis/federation.hpp"

namespace flis {

// Unweighted mean over clients of top-1 accuracy under the selection rule
// (each client is scored on its loss-minimizing cluster model).
inline double avg_local_accuracy(const std::vector<ModelParams>& cluster_models,
                                 const std::vector<ClientDataset>& clients) {
    if (clients.empty()) throw EmptyInputError("avg_local_accuracy: no clients");
    double total = 0.0;
    for (const auto& client : clients) {
        const int j = select_cluster(client, cluster_models);
        total += top1_accuracy(cluster_models[static_cast<std::size_t>(j)], client.test);
    }
    return total / static_cast<double>(clients.size());
}

inline double avg_local_accuracy(const ModelParams& global,
                                 const std::vector<ClientDataset>& clients) {
    return avg_local_accuracy(std::vector<ModelParams>{global}, clients);
}

// First 1-based round whose accuracy reaches the target; empty if never.
inline std::optional<int> rounds_to_target(const std::vector<double>& series, double target) {
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i] >= target) return static_cast<int>(i) + 1;
    }
    return std::nullopt;
}

// Total traffic over all records in Mb (10^6 bytes).
inline double comm_cost_mb(const std::vector<RoundRecord>& records) {
    std::uint64_t bytes = 0;
    for (const auto& rec : records) bytes += rec.bytes_down + rec.bytes_up;
    return static_cast<double>(bytes) / 1e6;
}

inline std::map<int, int> ground_truth(const std::vector<ClientDataset>& clients) {
    std::map<int, int> truth;
    for (const auto& c : clients) truth[c.client_id] = c.distribution_id;
    return truth;
}

inline bool truth_defined(const std::map<int, int>& truth) {
    for (const auto& [id, group] : truth) {
        if (group < 0) return false;
    }
    return !truth.empty();
}

struct RunSummary {
    std::string mode;
    double final_accuracy = 0.0;
    std::vector<double> accuracy_series;  // training rounds only (HC warm-up excluded)
    std::vector<std::optional<PairCounts>> clustering_error_series;
    std::optional<int> rounds_to_target;
    std::optional<double> target_accuracy;
    double comm_cost_mb = 0.0;
    std::size_t param_count = 0;
};

inline RunSummary summarize(const RunResult& result, const std::vector<ClientDataset>& clients,
                            std::optional<double> target = std::nullopt) {
    RunSummary s;
    s.mode = to_string(result.mode);
    s.param_count = result.param_count;
    s.comm_cost_mb = comm_cost_mb(result.records);
    const auto truth = ground_truth(clients);
    const bool have_truth = truth_defined(truth);
    for (const auto& rec : result.records) {
        if (rec.round < 1) continue;  // HC warm-up keeps series length == rounds
        s.accuracy_series.push_back(rec.mean_accuracy);
        if (have_truth) {
            s.clustering_error_series.push_back(clustering_error(rec.clusters, truth));
        } else {
            s.clustering_error_series.push_back(std::nullopt);
        }
    }
    s.final_accuracy = s.accuracy_series.empty() ? 0.0 : s.accuracy_series.back();
    s.target_accuracy = target;
    if (target) s.rounds_to_target = rounds_to_target(s.accuracy_series, *target);
    return s;
}

struct SweepRow {
    double beta = 0.0;
    int epochs = 0;
    double accuracy = 0.0;
    std::optional<PairCounts> error;  // final-round clustering error, when truth exists
};

// One FLIS (DC) run per grid point over shared data and seed.
inline std::vector<SweepRow> sweep(FederationConfig base, const std::vector<double>& betas,
                                   const std::vector<int>& epoch_grid,
                                   const std::vector<ClientDataset>& clients,
                                   const LabeledData& server_data) {
    base.mode = FedMode::kDc;
    const auto truth = ground_truth(clients);
    const bool have_truth = truth_defined(truth);
    std::vector<SweepRow> rows;
    rows.reserve(betas.size() * epoch_grid.size());
    for (int epochs : epoch_grid) {
        for (double beta : betas) {
            FederationConfig cfg = base;
            cfg.beta = beta;
            cfg.local_epochs = epochs;
            const RunResult result = run_flis_dc(cfg, clients, server_data);
            SweepRow row;
            row.beta = beta;
            row.epochs = epochs;
            row.accuracy = result.records.back().mean_accuracy;
            if (have_truth) {
                row.error = clustering_error(result.records.back().clusters, truth);
            }
            rows.push_back(row);
        }
    }
    return rows;
}

inline void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
    out << "beta,epochs,accuracy,fp,fn\n";
    for (const auto& row : rows) {
        out << row.beta << ',' << row.epochs << ',' << row.accuracy << ',';
        if (row.error) {
            out << row.error->false_positives << ',' << row.error->false_negatives;
        } else {
            out << ',';
        }
        out << '\n';
    }
}

}  // namespace flis
