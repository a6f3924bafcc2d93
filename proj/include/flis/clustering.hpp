#pragma once

// Inference-similarity clustering. The adjacency entry for two client
// output matrices is ||B_i (.) B_j||_F / (||B_i||_F ||B_j||_F) with (.) the
// Hadamard product; hard thresholding at beta then yields joint per-row
// clusters, or average-linkage agglomeration yields a disjoint partition.
// Note the formula's own scale: identical one-hot matrices score
// 1/sqrt(M), not 1, so beta should be chosen against the realized values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flis/error.hpp"
#include "flis/matrix.hpp"

namespace flis {

struct InferenceMatrix {
    Matrix values;  // M x N model outputs on the server dataset
    int client_id = -1;
};

struct AdjacencyMatrix {
    Matrix values;  // n x n, symmetric, entries >= 0
    std::vector<int> participant_ids;

    std::size_t size() const { return participant_ids.size(); }

    // Largest pairwise similarity; the scale to pick beta against.
    double max_off_diagonal() const {
        double mx = 0.0;
        for (std::size_t i = 0; i < size(); ++i) {
            for (std::size_t j = i + 1; j < size(); ++j) mx = std::max(mx, values(i, j));
        }
        return mx;
    }

    // Largest entry including the diagonal; the base of the hierarchical
    // distance d = max_entry - A. The diagonal dominates unless two inference
    // matrices coincide, so distinct participants keep strictly positive
    // distances.
    double max_entry() const {
        double mx = 0.0;
        for (double v : values.data()) mx = std::max(mx, v);
        return mx;
    }
};

// Output of hard thresholding: entries in {-1, 0, +1}.
struct SignedAdjacency {
    std::vector<int> values;
    std::vector<int> participant_ids;

    std::size_t size() const { return participant_ids.size(); }
    int operator()(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
};

enum class ClusterMode { kJoint, kDisjoint };

struct ClusterSet {
    std::vector<std::vector<int>> clusters;  // client ids, each sorted ascending
    std::vector<int> participants;           // every participant of the round
    ClusterMode mode = ClusterMode::kDisjoint;

    friend bool operator==(const ClusterSet&, const ClusterSet&) = default;
};

inline AdjacencyMatrix adjacency(const std::vector<InferenceMatrix>& mats) {
    if (mats.size() < 2) throw Error("adjacency: need at least 2 inference matrices");
    const std::size_t rows = mats.front().values.rows();
    const std::size_t cols = mats.front().values.cols();
    for (const auto& m : mats) {
        if (m.values.rows() != rows || m.values.cols() != cols) {
            throw ShapeError("adjacency: inference matrices have mismatched dimensions");
        }
    }

    const std::size_t n = mats.size();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (double v : mats[i].values.data()) sq += v * v;
        norms[i] = std::sqrt(sq);
        if (norms[i] <= 0.0) {
            throw DegenerateMatrixError("adjacency: inference matrix " + std::to_string(i) +
                                        " has zero Frobenius norm");
        }
    }

    AdjacencyMatrix adj;
    adj.values = Matrix(n, n);
    adj.participant_ids.reserve(n);
    for (const auto& m : mats) adj.participant_ids.push_back(m.client_id);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double sq = 0.0;
            const auto& a = mats[i].values.data();
            const auto& b = mats[j].values.data();
            for (std::size_t k = 0; k < a.size(); ++k) {
                const double prod = a[k] * b[k];
                sq += prod * prod;
            }
            const double value = std::sqrt(sq) / (norms[i] * norms[j]);
            adj.values(i, j) = value;
            adj.values(j, i) = value;  // symmetric by construction
        }
    }
    return adj;
}

// Sign(A - beta) with Sign(0) = 0; a 0 entry is treated as non-membership
// downstream.
inline SignedAdjacency hard_threshold(const AdjacencyMatrix& adj, double beta) {
    const std::size_t n = adj.size();
    SignedAdjacency out;
    out.participant_ids = adj.participant_ids;
    out.values.resize(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double v = adj.values(i, j);
            out.values[i * n + j] = v > beta ? 1 : (v < beta ? -1 : 0);
        }
    }
    return out;
}

// One cluster per row: the positive entries of the row plus the row's own
// client. Duplicate clusters are retained, so the count always equals the
// participant count.
inline ClusterSet joint_clusters(const SignedAdjacency& sa) {
    const std::size_t n = sa.size();
    ClusterSet cs;
    cs.mode = ClusterMode::kJoint;
    cs.participants = sa.participant_ids;
    cs.clusters.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<int> members;
        for (std::size_t j = 0; j < n; ++j) {
            if (sa(i, j) > 0) members.push_back(sa.participant_ids[j]);
        }
        if (std::find(members.begin(), members.end(), sa.participant_ids[i]) == members.end()) {
            members.push_back(sa.participant_ids[i]);
        }
        std::sort(members.begin(), members.end());
        cs.clusters.push_back(std::move(members));
    }
    return cs;
}

// Average-linkage agglomeration over distances d = A_max - A, with A_max the
// matrix's largest entry. Merging stops once the smallest inter-cluster
// distance exceeds the threshold; ties pick the lexicographically lowest
// pair, so the result is deterministic.
inline ClusterSet hierarchical_clusters(const AdjacencyMatrix& adj, double distance_threshold) {
    const std::size_t n = adj.size();
    ClusterSet cs;
    cs.mode = ClusterMode::kDisjoint;
    cs.participants = adj.participant_ids;
    if (n == 0) return cs;

    const double a_max = adj.max_entry();
    std::vector<std::vector<std::size_t>> groups(n);
    for (std::size_t i = 0; i < n; ++i) groups[i] = {i};

    const auto linkage = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
        double total = 0.0;
        for (std::size_t i : a) {
            for (std::size_t j : b) total += a_max - adj.values(i, j);
        }
        return total / static_cast<double>(a.size() * b.size());
    };

    while (groups.size() > 1) {
        std::size_t best_a = 0, best_b = 1;
        double best = linkage(groups[0], groups[1]);
        for (std::size_t a = 0; a < groups.size(); ++a) {
            for (std::size_t b = a + 1; b < groups.size(); ++b) {
                const double d = linkage(groups[a], groups[b]);
                if (d < best) {
                    best = d;
                    best_a = a;
                    best_b = b;
                }
            }
        }
        if (best > distance_threshold) break;
        groups[best_a].insert(groups[best_a].end(), groups[best_b].begin(), groups[best_b].end());
        groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(best_b));
    }

    cs.clusters.reserve(groups.size());
    for (const auto& g : groups) {
        std::vector<int> members;
        members.reserve(g.size());
        for (std::size_t i : g) members.push_back(adj.participant_ids[i]);
        std::sort(members.begin(), members.end());
        cs.clusters.push_back(std::move(members));
    }
    std::sort(cs.clusters.begin(), cs.clusters.end());
    return cs;
}

struct PairCounts {
    long false_positives = 0;  // co-clustered pairs from different ground-truth groups
    long false_negatives = 0;  // same-group pairs sharing no cluster

    long total() const { return false_positives + false_negatives; }

    friend bool operator==(const PairCounts&, const PairCounts&) = default;
};

// FP + FN over all unordered participant pairs; "co-clustered" means sharing
// at least one cluster, which covers the joint mode.
inline PairCounts clustering_error(const ClusterSet& found,
                                   const std::map<int, int>& distribution_ids) {
    const auto& ids = found.participants;
    const std::size_t n = ids.size();
    std::vector<int> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto it = distribution_ids.find(ids[i]);
        if (it == distribution_ids.end() || it->second < 0) {
            throw MetricUnavailableError("clustering_error: ground truth undefined for client " +
                                         std::to_string(ids[i]));
        }
        truth[i] = it->second;
    }

    std::map<int, std::size_t> position;
    for (std::size_t i = 0; i < n; ++i) position[ids[i]] = i;
    std::vector<bool> together(n * n, false);
    for (const auto& cluster : found.clusters) {
        for (std::size_t a = 0; a < cluster.size(); ++a) {
            const auto pa = position.at(cluster[a]);
            for (std::size_t b = a + 1; b < cluster.size(); ++b) {
                const auto pb = position.at(cluster[b]);
                together[pa * n + pb] = true;
                together[pb * n + pa] = true;
            }
        }
    }

    PairCounts counts;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool same_truth = truth[i] == truth[j];
            const bool co_clustered = together[i * n + j];
            if (co_clustered && !same_truth) ++counts.false_positives;
            if (!co_clustered && same_truth) ++counts.false_negatives;
        }
    }
    return counts;
}

}  // namespace flis
