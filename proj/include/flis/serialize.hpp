#pragma once

// JSON views of round records and summaries: one JSON line per round for the
// audit log, plus the run summary document.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flis/federation.hpp"
#include "flis/metrics.hpp"

namespace flis {

inline nlohmann::json to_json(const ClusterSet& cs) {
    return {{"mode", cs.mode == ClusterMode::kJoint ? "joint" : "disjoint"},
            {"participants", cs.participants},
            {"clusters", cs.clusters}};
}

inline nlohmann::json to_json(const AdjacencyMatrix& adj) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < adj.size(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < adj.size(); ++j) row.push_back(adj.values(i, j));
        rows.push_back(std::move(row));
    }
    return {{"participants", adj.participant_ids}, {"values", std::move(rows)}};
}

inline AdjacencyMatrix adjacency_from_json(const nlohmann::json& j) {
    AdjacencyMatrix adj;
    adj.participant_ids = j.at("participants").get<std::vector<int>>();
    const auto& rows = j.at("values");
    const std::size_t n = adj.participant_ids.size();
    adj.values = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) adj.values(i, k) = rows.at(i).at(k).get<double>();
    }
    return adj;
}

inline ClusterSet cluster_set_from_json(const nlohmann::json& j) {
    ClusterSet cs;
    cs.mode = j.at("mode").get<std::string>() == "joint" ? ClusterMode::kJoint
                                                         : ClusterMode::kDisjoint;
    cs.participants = j.at("participants").get<std::vector<int>>();
    cs.clusters = j.at("clusters").get<std::vector<std::vector<int>>>();
    return cs;
}

inline nlohmann::json to_json(const RoundRecord& rec, FedMode mode) {
    nlohmann::json selected = nlohmann::json::object();
    for (const auto& [client, index] : rec.selected) selected[std::to_string(client)] = index;
    nlohmann::json j{{"mode", to_string(mode)},
                     {"round", rec.round},
                     {"sampled", rec.sampled},
                     {"selected", std::move(selected)},
                     {"clusters", to_json(rec.clusters)},
                     {"client_accuracy", rec.client_accuracy},
                     {"mean_accuracy", rec.mean_accuracy},
                     {"bytes_down", rec.bytes_down},
                     {"bytes_up", rec.bytes_up}};
    if (rec.adjacency) {
        j["adjacency"] = to_json(*rec.adjacency);
        j["a_max"] = rec.adjacency->max_off_diagonal();
    } else {
        j["adjacency"] = nullptr;
        j["a_max"] = nullptr;
    }
    return j;
}

inline void write_rounds_jsonl(const RunResult& result, std::ostream& out) {
    for (const auto& rec : result.records) out << to_json(rec, result.mode).dump() << '\n';
}

inline nlohmann::json to_json(const RunSummary& s) {
    nlohmann::json errors = nlohmann::json::array();
    for (const auto& e : s.clustering_error_series) {
        if (e.has_value()) {
            errors.push_back({{"fp", e->false_positives}, {"fn", e->false_negatives}});
        } else {
            errors.push_back(nullptr);
        }
    }
    nlohmann::json j{{"mode", s.mode},
                     {"final_accuracy", s.final_accuracy},
                     {"accuracy_series", s.accuracy_series},
                     {"clustering_error_series", std::move(errors)},
                     {"comm_cost_mb", s.comm_cost_mb},
                     {"param_count", s.param_count}};
    j["target_accuracy"] = s.target_accuracy ? nlohmann::json(*s.target_accuracy) : nullptr;
    j["rounds_to_target"] = s.rounds_to_target ? nlohmann::json(*s.rounds_to_target) : nullptr;
    return j;
}

inline nlohmann::json to_json(const PersonalizationResult& p) {
    return {{"client_ids", p.client_ids},
            {"selected", p.selected},
            {"accuracy", p.accuracy},
            {"mean_accuracy", p.mean_accuracy}};
}

}  // namespace flis
