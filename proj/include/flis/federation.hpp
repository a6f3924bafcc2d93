#pragma once

// Round orchestration. FLIS (DC) rebuilds joint clusters from inference
// similarity every round; FLIS (HC) fixes a disjoint partition after an
// all-client warm-up round; FedAvg and SOLO are the degenerate baselines.
//
// Determinism contract: the sampled set of round r depends only on
// (seed, r) and a client's SGD stream only on (seed, r, client), never on
// the mode. That is what makes the degenerate-mode equalities (DC at
// beta=0 vs FedAvg, DC above A_max vs SOLO, single-cluster HC vs FedAvg)
// hold coordinate-wise instead of just statistically.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flis/clustering.hpp"
#include "flis/data.hpp"
#include "flis/error.hpp"
#include "flis/nn.hpp"
#include "flis/rng.hpp"

namespace flis {

enum class FedMode { kDc, kHc, kFedAvg, kSolo };

inline std::string to_string(FedMode mode) {
    switch (mode) {
        case FedMode::kDc: return "dc";
        case FedMode::kHc: return "hc";
        case FedMode::kFedAvg: return "fedavg";
        case FedMode::kSolo: return "solo";
    }
    return "?";
}

struct FederationConfig {
    int num_clients = 0;
    double sample_rate = 1.0;  // R in (0, 1]
    int rounds = 10;
    int local_epochs = 1;
    double lr = 0.05;
    std::size_t batch_size = 32;
    double beta = 0.05;  // inference-similarity threshold (DC)
    FedMode mode = FedMode::kFedAvg;
    InferenceMode inference_mode = InferenceMode::kOneHot;
    double hc_distance_threshold = 0.02;
    int hidden_units = 32;
    std::uint64_t seed = 0;
};

struct ClusterModels {
    std::vector<ModelParams> models;  // aligned with clusters.clusters
    ClusterSet clusters;
    int round = 0;
};

struct RoundRecord {
    int round = 0;                // HC uses round 0 for the warm-up
    std::vector<int> sampled;
    std::map<int, int> selected;  // sampled client -> cluster index it trained from
    ClusterSet clusters;
    std::optional<AdjacencyMatrix> adjacency;
    std::vector<ModelParams> cluster_params;  // post-aggregation, aligned with clusters
    std::vector<double> client_accuracy;      // all clients, via their selected cluster model
    double mean_accuracy = 0.0;
    std::uint64_t bytes_down = 0;
    std::uint64_t bytes_up = 0;
};

struct RunResult {
    FedMode mode = FedMode::kFedAvg;
    std::vector<RoundRecord> records;
    ClusterModels final_models;
    std::vector<double> final_client_accuracy;
    std::size_t param_count = 0;
};

namespace detail {

constexpr std::uint64_t kFedInitStream = 11001;
constexpr std::uint64_t kFedClientStream = 11002;
constexpr std::uint64_t kFedSampleStream = 11003;
constexpr std::uint64_t kFedPersonalizeStream = 11004;

struct ClientSubmission {
    ModelParams model;
    std::size_t train_size = 0;
};

inline std::uint64_t model_bytes(std::size_t param_count) {
    return static_cast<std::uint64_t>(param_count) * 8;  // 64-bit weights
}

inline std::vector<LayerShape> infer_shape(const std::vector<ClientDataset>& clients,
                                           int hidden_units) {
    if (clients.empty()) throw EmptyInputError("federation: no clients");
    const std::size_t dim = clients.front().train.features.cols();
    int classes = 0;
    for (const auto& c : clients) {
        classes = std::max(classes, num_classes(c.train));
        classes = std::max(classes, num_classes(c.test));
    }
    return mlp_shape(dim, static_cast<std::size_t>(hidden_units),
                     static_cast<std::size_t>(classes));
}

inline ModelParams train_client(const FederationConfig& cfg, const ModelParams& start,
                                const ClientDataset& client, int round) {
    const std::size_t batch = std::min(cfg.batch_size, client.train.size());
    try {
        return client_update(start, client.train, cfg.local_epochs, cfg.lr, batch,
                             derive_seed(cfg.seed, kFedClientStream,
                                         static_cast<std::uint64_t>(round),
                                         static_cast<std::uint64_t>(client.client_id)));
    } catch (const DivergenceError& e) {
        throw DivergenceError("round " + std::to_string(round) + ", client " +
                              std::to_string(client.client_id) + ": " + e.what());
    }
}

// Every client picks its loss-minimizing model and is scored on its own test
// split; cluster selection and accuracy evaluation use the same rule.
inline void evaluate_all(const std::vector<ModelParams>& models,
                         const std::vector<ClientDataset>& clients, RoundRecord& rec) {
    rec.client_accuracy.resize(clients.size());
    double total = 0.0;
    for (std::size_t k = 0; k < clients.size(); ++k) {
        std::size_t best = 0;
        double best_loss = loss(models[0], clients[k].test);
        for (std::size_t j = 1; j < models.size(); ++j) {
            const double l = loss(models[j], clients[k].test);
            if (l < best_loss) {
                best_loss = l;
                best = j;
            }
        }
        rec.client_accuracy[k] = top1_accuracy(models[best], clients[k].test);
        total += rec.client_accuracy[k];
    }
    rec.mean_accuracy = total / static_cast<double>(clients.size());
}

// HC variant: accuracy through the client's fixed cluster membership.
inline void evaluate_membership(const std::vector<ModelParams>& models,
                                const std::vector<int>& membership,
                                const std::vector<ClientDataset>& clients, RoundRecord& rec) {
    rec.client_accuracy.resize(clients.size());
    double total = 0.0;
    for (std::size_t k = 0; k < clients.size(); ++k) {
        rec.client_accuracy[k] =
            top1_accuracy(models[static_cast<std::size_t>(membership[k])], clients[k].test);
        total += rec.client_accuracy[k];
    }
    rec.mean_accuracy = total / static_cast<double>(clients.size());
}

inline void validate_config(const FederationConfig& cfg, const std::vector<ClientDataset>& clients) {
    if (clients.empty()) throw EmptyInputError("federation: no clients");
    if (cfg.num_clients != static_cast<int>(clients.size())) {
        throw Error("federation: config.num_clients does not match client list");
    }
    if (cfg.sample_rate <= 0.0 || cfg.sample_rate > 1.0) {
        throw Error("federation: sample_rate must be in (0, 1]");
    }
    if (cfg.rounds < 1) throw Error("federation: rounds must be >= 1");
    if (cfg.local_epochs < 1) throw Error("federation: local_epochs must be >= 1");
}

}  // namespace detail

// Uniform without-replacement sample of size max(ceil(R*N), 1), deterministic
// per (seed, round); returned sorted.
inline std::vector<int> sample_clients(int num_clients, double sample_rate, int round,
                                       std::uint64_t seed) {
    const int n = std::clamp(ceil_fraction(sample_rate, num_clients), 1, num_clients);
    std::vector<int> ids(static_cast<std::size_t>(num_clients));
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(derive_seed(seed, detail::kFedSampleStream, static_cast<std::uint64_t>(round)));
    rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(n));
    std::sort(ids.begin(), ids.end());
    return ids;
}

// Index of the cluster model with minimum loss on the client's local test
// split; ties resolve to the lowest index.
inline int select_cluster(const ClientDataset& client, const std::vector<ModelParams>& models) {
    if (models.empty()) throw EmptyInputError("select_cluster: no cluster models");
    int best = 0;
    double best_loss = loss(models[0], client.test);
    for (std::size_t j = 1; j < models.size(); ++j) {
        const double l = loss(models[j], client.test);
        if (l < best_loss) {
            best_loss = l;
            best = static_cast<int>(j);
        }
    }
    return best;
}

inline int select_cluster(const ClientDataset& client, const ClusterModels& models) {
    return select_cluster(client, models.models);
}

// |D_k|-weighted coordinate-wise mean over the cluster's members. A
// singleton cluster and a cluster of identical models both reproduce the
// member exactly, with no rounding from the weighted sum.
inline ModelParams aggregate(const std::vector<int>& cluster,
                             const std::map<int, detail::ClientSubmission>& updated) {
    if (cluster.empty()) throw AggregationError("aggregate: empty cluster");
    for (int k : cluster) {
        if (!updated.count(k)) {
            throw AggregationError("aggregate: client " + std::to_string(k) +
                                   " has no submitted model");
        }
    }
    const ModelParams& head = updated.at(cluster.front()).model;
    const bool all_identical = std::all_of(cluster.begin(), cluster.end(), [&](int k) {
        return updated.at(k).model.weights == head.weights;
    });
    if (all_identical) {
        if (updated.at(cluster.front()).train_size == 0 &&
            std::all_of(cluster.begin(), cluster.end(),
                        [&](int k) { return updated.at(k).train_size == 0; })) {
            throw AggregationError("aggregate: total |D_k| weight is zero");
        }
        return head;
    }
    double total_weight = 0.0;
    ModelParams out;
    bool first = true;
    for (int k : cluster) {
        const auto it = updated.find(k);
        if (it == updated.end()) {
            throw AggregationError("aggregate: client " + std::to_string(k) +
                                   " has no submitted model");
        }
        const auto& sub = it->second;
        const double w = static_cast<double>(sub.train_size);
        if (first) {
            out = sub.model;
            for (auto& v : out.weights) v *= w;
            first = false;
        } else {
            for (std::size_t i = 0; i < out.weights.size(); ++i) {
                out.weights[i] += w * sub.model.weights[i];
            }
        }
        total_weight += w;
    }
    if (total_weight <= 0.0) throw AggregationError("aggregate: total |D_k| weight is zero");
    for (auto& v : out.weights) v /= total_weight;
    return out;
}

// Algorithm: round 1 trains sampled clients from the initial model; from
// round 2 on, every sampled client downloads all current cluster models,
// picks the one minimizing its test loss, trains, and the server re-clusters
// the submissions by inference similarity and aggregates each cluster.
inline RunResult run_flis_dc(const FederationConfig& cfg, const std::vector<ClientDataset>& clients,
                             const LabeledData& server_data) {
    detail::validate_config(cfg, clients);
    if (server_data.empty()) throw EmptyInputError("flis dc: empty server dataset");
    const auto shape = detail::infer_shape(clients, cfg.hidden_units);
    const ModelParams global = xavier_init(shape, derive_seed(cfg.seed, detail::kFedInitStream));
    const std::uint64_t bytes = detail::model_bytes(global.param_count());

    RunResult result;
    result.mode = FedMode::kDc;
    result.param_count = global.param_count();
    std::vector<ModelParams> cluster_models;

    for (int r = 1; r <= cfg.rounds; ++r) {
        RoundRecord rec;
        rec.round = r;
        rec.sampled = sample_clients(cfg.num_clients, cfg.sample_rate, r, cfg.seed);

        std::map<int, detail::ClientSubmission> updated;
        std::vector<InferenceMatrix> mats;
        mats.reserve(rec.sampled.size());
        for (int k : rec.sampled) {
            const auto uk = static_cast<std::size_t>(k);
            const ModelParams* start = &global;
            if (!cluster_models.empty()) {
                const int j = select_cluster(clients[uk], cluster_models);
                rec.selected[k] = j;
                start = &cluster_models[static_cast<std::size_t>(j)];
                rec.bytes_down += bytes * cluster_models.size();  // all clusters broadcast
            } else {
                rec.bytes_down += bytes;
            }
            ModelParams model = detail::train_client(cfg, *start, clients[uk], r);
            rec.bytes_up += bytes;
            mats.push_back({inference_matrix(model, server_data, cfg.inference_mode), k});
            updated.emplace(k, detail::ClientSubmission{std::move(model), clients[uk].train.size()});
        }

        if (rec.sampled.size() >= 2) {
            rec.adjacency = adjacency(mats);
            rec.clusters = joint_clusters(hard_threshold(*rec.adjacency, cfg.beta));
        } else {
            rec.clusters.mode = ClusterMode::kJoint;
            rec.clusters.participants = rec.sampled;
            rec.clusters.clusters = {rec.sampled};
        }

        cluster_models.clear();
        cluster_models.reserve(rec.clusters.clusters.size());
        for (const auto& cluster : rec.clusters.clusters) {
            cluster_models.push_back(aggregate(cluster, updated));
        }

        detail::evaluate_all(cluster_models, clients, rec);
        rec.cluster_params = cluster_models;
        result.records.push_back(std::move(rec));
    }

    result.final_models = {std::move(cluster_models), result.records.back().clusters, cfg.rounds};
    result.final_client_accuracy = result.records.back().client_accuracy;
    return result;
}

// Algorithm: an all-client warm-up round (recorded as round 0) trains from
// the initial model purely to build the adjacency matrix; hierarchical
// clustering fixes the partition, every cluster model restarts from the
// initial weights, and later rounds train sampled clients on their own
// cluster's model only.
inline RunResult run_flis_hc(const FederationConfig& cfg, const std::vector<ClientDataset>& clients,
                             const LabeledData& server_data) {
    detail::validate_config(cfg, clients);
    if (server_data.empty()) throw EmptyInputError("flis hc: empty server dataset");
    const auto shape = detail::infer_shape(clients, cfg.hidden_units);
    const ModelParams global = xavier_init(shape, derive_seed(cfg.seed, detail::kFedInitStream));
    const std::uint64_t bytes = detail::model_bytes(global.param_count());

    RunResult result;
    result.mode = FedMode::kHc;
    result.param_count = global.param_count();

    // Warm-up: every client trains once; only the inference results are kept.
    RoundRecord warm;
    warm.round = 0;
    warm.sampled.resize(clients.size());
    std::iota(warm.sampled.begin(), warm.sampled.end(), 0);
    std::vector<InferenceMatrix> mats;
    mats.reserve(clients.size());
    for (const auto& client : clients) {
        const ModelParams model = detail::train_client(cfg, global, client, 0);
        mats.push_back({inference_matrix(model, server_data, cfg.inference_mode), client.client_id});
        warm.bytes_down += bytes;
        warm.bytes_up += bytes;
    }

    ClusterSet partition;
    if (clients.size() >= 2) {
        warm.adjacency = adjacency(mats);
        partition = hierarchical_clusters(*warm.adjacency, cfg.hc_distance_threshold);
    } else {
        partition.mode = ClusterMode::kDisjoint;
        partition.participants = warm.sampled;
        partition.clusters = {warm.sampled};
    }
    warm.clusters = partition;

    std::vector<int> membership(clients.size(), -1);
    for (std::size_t j = 0; j < partition.clusters.size(); ++j) {
        for (int k : partition.clusters[j]) membership[static_cast<std::size_t>(k)] = static_cast<int>(j);
    }

    std::vector<ModelParams> cluster_models(partition.clusters.size(), global);
    detail::evaluate_membership(cluster_models, membership, clients, warm);
    warm.cluster_params = cluster_models;
    result.records.push_back(std::move(warm));

    for (int r = 1; r <= cfg.rounds; ++r) {
        RoundRecord rec;
        rec.round = r;
        rec.sampled = sample_clients(cfg.num_clients, cfg.sample_rate, r, cfg.seed);
        rec.clusters = partition;

        std::map<int, detail::ClientSubmission> updated;
        for (int k : rec.sampled) {
            const auto uk = static_cast<std::size_t>(k);
            const int j = membership[uk];
            rec.selected[k] = j;
            rec.bytes_down += bytes;  // only the client's own cluster model is sent
            ModelParams model = detail::train_client(
                cfg, cluster_models[static_cast<std::size_t>(j)], clients[uk], r);
            rec.bytes_up += bytes;
            updated.emplace(k, detail::ClientSubmission{std::move(model), clients[uk].train.size()});
        }

        for (std::size_t j = 0; j < partition.clusters.size(); ++j) {
            std::vector<int> present;
            for (int k : partition.clusters[j]) {
                if (updated.count(k)) present.push_back(k);
            }
            if (!present.empty()) cluster_models[j] = aggregate(present, updated);
        }

        detail::evaluate_membership(cluster_models, membership, clients, rec);
        rec.cluster_params = cluster_models;
        result.records.push_back(std::move(rec));
    }

    result.final_models = {std::move(cluster_models), partition, cfg.rounds};
    result.final_client_accuracy = result.records.back().client_accuracy;
    return result;
}

inline RunResult run_fedavg(const FederationConfig& cfg, const std::vector<ClientDataset>& clients) {
    detail::validate_config(cfg, clients);
    const auto shape = detail::infer_shape(clients, cfg.hidden_units);
    ModelParams global = xavier_init(shape, derive_seed(cfg.seed, detail::kFedInitStream));
    const std::uint64_t bytes = detail::model_bytes(global.param_count());

    RunResult result;
    result.mode = FedMode::kFedAvg;
    result.param_count = global.param_count();

    for (int r = 1; r <= cfg.rounds; ++r) {
        RoundRecord rec;
        rec.round = r;
        rec.sampled = sample_clients(cfg.num_clients, cfg.sample_rate, r, cfg.seed);

        std::map<int, detail::ClientSubmission> updated;
        for (int k : rec.sampled) {
            const auto uk = static_cast<std::size_t>(k);
            rec.selected[k] = 0;
            ModelParams model = detail::train_client(cfg, global, clients[uk], r);
            rec.bytes_down += bytes;
            rec.bytes_up += bytes;
            updated.emplace(k, detail::ClientSubmission{std::move(model), clients[uk].train.size()});
        }
        global = aggregate(rec.sampled, updated);

        rec.clusters.mode = ClusterMode::kDisjoint;
        rec.clusters.participants = rec.sampled;
        rec.clusters.clusters = {rec.sampled};
        detail::evaluate_all({global}, clients, rec);
        rec.cluster_params = {global};
        result.records.push_back(std::move(rec));
    }

    result.final_models = {{global}, result.records.back().clusters, cfg.rounds};
    result.final_client_accuracy = result.records.back().client_accuracy;
    return result;
}

// Every client trains alone from the initial broadcast; the round structure
// only segments the rounds * local_epochs epochs of local training.
inline RunResult run_solo(const FederationConfig& cfg, const std::vector<ClientDataset>& clients) {
    detail::validate_config(cfg, clients);
    const auto shape = detail::infer_shape(clients, cfg.hidden_units);
    const ModelParams global = xavier_init(shape, derive_seed(cfg.seed, detail::kFedInitStream));
    const std::uint64_t bytes = detail::model_bytes(global.param_count());

    RunResult result;
    result.mode = FedMode::kSolo;
    result.param_count = global.param_count();

    std::vector<ModelParams> models(clients.size(), global);
    std::vector<int> membership(clients.size());
    std::iota(membership.begin(), membership.end(), 0);

    ClusterSet singletons;
    singletons.mode = ClusterMode::kDisjoint;
    singletons.participants = membership;
    for (int k : membership) singletons.clusters.push_back({k});

    for (int r = 1; r <= cfg.rounds; ++r) {
        RoundRecord rec;
        rec.round = r;
        rec.sampled = membership;
        rec.clusters = singletons;
        if (r == 1) rec.bytes_down = bytes * clients.size();  // initial broadcast only
        for (std::size_t k = 0; k < clients.size(); ++k) {
            models[k] = detail::train_client(cfg, models[k], clients[k], r);
        }
        detail::evaluate_membership(models, membership, clients, rec);
        rec.cluster_params = models;
        result.records.push_back(std::move(rec));
    }

    result.final_models = {std::move(models), singletons, cfg.rounds};
    result.final_client_accuracy = result.records.back().client_accuracy;
    return result;
}

inline RunResult run_federation(const FederationConfig& cfg,
                                const std::vector<ClientDataset>& clients,
                                const LabeledData& server_data) {
    switch (cfg.mode) {
        case FedMode::kDc: return run_flis_dc(cfg, clients, server_data);
        case FedMode::kHc: return run_flis_hc(cfg, clients, server_data);
        case FedMode::kFedAvg: return run_fedavg(cfg, clients);
        case FedMode::kSolo: return run_solo(cfg, clients);
    }
    throw Error("unknown federation mode");
}

struct PersonalizationResult {
    std::vector<int> client_ids;
    std::vector<int> selected;
    std::vector<double> accuracy;
    double mean_accuracy = 0.0;
};

// Unseen clients pick their best cluster by test loss and fine-tune it for a
// few epochs on their own training data; epochs = 0 reports the selected
// model as-is.
inline PersonalizationResult personalize_unseen(const std::vector<ClientDataset>& unseen,
                                                const ClusterModels& models, int epochs, double lr,
                                                std::size_t batch_size, std::uint64_t seed) {
    if (models.models.empty()) throw EmptyInputError("personalize_unseen: no cluster models");
    PersonalizationResult out;
    double total = 0.0;
    for (const auto& client : unseen) {
        const int j = select_cluster(client, models.models);
        ModelParams model = models.models[static_cast<std::size_t>(j)];
        if (epochs > 0) {
            const std::size_t batch = std::min(batch_size, client.train.size());
            model = client_update(model, client.train, epochs, lr, batch,
                                  derive_seed(seed, detail::kFedPersonalizeStream,
                                              static_cast<std::uint64_t>(client.client_id)));
        }
        const double acc = top1_accuracy(model, client.test);
        out.client_ids.push_back(client.client_id);
        out.selected.push_back(j);
        out.accuracy.push_back(acc);
        total += acc;
    }
    out.mean_accuracy = unseen.empty() ? 0.0 : total / static_cast<double>(unseen.size());
    return out;
}

}  // namespace flis
