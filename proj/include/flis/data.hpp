#pragma once

// Synthetic classification corpus plus the Non-IID partitioners that spread
// it across simulated clients: fixed label subsets (label skew), Dirichlet
// class proportions, or IID. The server's auxiliary holdout is carved out
// before any client sees a sample, so client data and server data are
// disjoint by construction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "flis/error.hpp"
#include "flis/nn.hpp"
#include "flis/rng.hpp"

namespace flis {

enum class PartitionScheme { kLabelSkew, kDirichlet, kIid };

struct PartitionSpec {
    PartitionScheme scheme = PartitionScheme::kIid;
    double label_fraction = 0.2;  // label-skew share p of the label space per client
    double alpha = 0.5;           // Dirichlet concentration
    int num_clients = 1;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct ClientDataset {
    int client_id = -1;
    LabeledData train;
    LabeledData test;
    int distribution_id = -1;  // planted ground-truth group, -1 if undefined

    std::size_t size() const { return train.size(); }  // |D_k|
};

inline int num_classes(const LabeledData& data) {
    int mx = -1;
    for (int y : data.labels) mx = std::max(mx, y);
    return mx + 1;
}

// Integer ceil of a fraction like p*N, guarded against binary noise so that
// e.g. ceil(0.2 * 10) stays 2 rather than drifting to 3.
inline int ceil_fraction(double fraction, int n) {
    return static_cast<int>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

namespace detail {

constexpr std::uint64_t kCenterStream = 7001;
constexpr std::uint64_t kSampleStream = 7002;
constexpr std::uint64_t kLabelPermStream = 7101;
constexpr std::uint64_t kClassSplitStream = 7102;
constexpr std::uint64_t kTestSplitStream = 7103;
constexpr std::uint64_t kDirichletStream = 7201;
constexpr std::uint64_t kDirichletRowStream = 7202;
constexpr std::uint64_t kIidStream = 7301;
constexpr std::uint64_t kHoldoutStream = 7401;

inline std::vector<std::vector<std::size_t>> rows_by_class(const LabeledData& corpus) {
    std::vector<std::vector<std::size_t>> rows(static_cast<std::size_t>(num_classes(corpus)));
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        rows[static_cast<std::size_t>(corpus.labels[i])].push_back(i);
    }
    return rows;
}

inline LabeledData gather_rows(const LabeledData& corpus, const std::vector<std::size_t>& rows) {
    LabeledData out;
    const std::size_t dim = corpus.features.cols();
    out.features = Matrix(rows.size(), dim);
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(corpus.features.row(rows[i]), corpus.features.row(rows[i]) + dim,
                  out.features.row(i));
        out.labels.push_back(corpus.labels[rows[i]]);
    }
    return out;
}

// Stratified per-label train/test split of one client's rows. Labels with a
// single sample go to train; a client holding at least two samples always
// keeps a non-empty test split, since cluster selection needs one.
inline ClientDataset make_client(const LabeledData& corpus, int client_id,
                                 std::vector<std::size_t> rows, int distribution_id,
                                 double test_fraction, std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t r : rows) by_label[corpus.labels[r]].push_back(r);
    std::vector<std::size_t> train_rows, test_rows;
    Rng rng(derive_seed(seed, kTestSplitStream, static_cast<std::uint64_t>(client_id)));
    for (auto& [label, label_rows] : by_label) {
        rng.shuffle(label_rows);
        std::size_t n_test =
            static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(label_rows.size())));
        if (n_test == 0 && label_rows.size() >= 2) n_test = 1;
        for (std::size_t i = 0; i < label_rows.size(); ++i) {
            (i < n_test ? test_rows : train_rows).push_back(label_rows[i]);
        }
    }
    if (test_rows.empty() && train_rows.size() >= 2) {
        // Every label had a single sample; take the last of the largest group.
        auto largest = by_label.begin();
        for (auto it = by_label.begin(); it != by_label.end(); ++it) {
            if (it->second.size() > largest->second.size()) largest = it;
        }
        const std::size_t moved = largest->second.back();
        test_rows.push_back(moved);
        train_rows.erase(std::find(train_rows.begin(), train_rows.end(), moved));
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    ClientDataset client;
    client.client_id = client_id;
    client.distribution_id = distribution_id;
    client.train = gather_rows(corpus, train_rows);
    client.test = gather_rows(corpus, test_rows);
    if (client.train.empty()) {
        throw PartitionError("client " + std::to_string(client_id) + " received no training data");
    }
    return client;
}

// counts_i = round of proportions_i * total, exact by largest remainder.
inline std::vector<std::size_t> largest_remainder(const std::vector<double>& proportions,
                                                  std::size_t total) {
    const std::size_t n = proportions.size();
    std::vector<std::size_t> counts(n);
    std::vector<std::pair<double, std::size_t>> rema(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double exact = proportions[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[i];
        rema[i] = {exact - std::floor(exact), i};
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) counts[rema[i % n].second] += 1;
    return counts;
}

}  // namespace detail

// Gaussian blobs: class c is an isotropic Gaussian (stddev = spread) around a
// seed-derived unit-norm center. Samples come out grouped by class.
inline LabeledData generate_synthetic(int classes, int dim, int per_class, double spread,
                                      std::uint64_t seed) {
    if (classes < 2) throw Error("generate_synthetic: need at least 2 classes");
    if (dim < 2) throw Error("generate_synthetic: need dim >= 2");
    if (per_class < 1) throw Error("generate_synthetic: need per_class >= 1");
    if (spread < 0.0) throw Error("generate_synthetic: spread must be >= 0");

    Matrix centers(static_cast<std::size_t>(classes), static_cast<std::size_t>(dim));
    Rng center_rng(derive_seed(seed, detail::kCenterStream));
    for (int c = 0; c < classes; ++c) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (int j = 0; j < dim; ++j) {
                const double v = center_rng.normal();
                centers(c, j) = v;
                norm += v * v;
            }
            norm = std::sqrt(norm);
        } while (norm < 1e-12);
        for (int j = 0; j < dim; ++j) centers(c, j) /= norm;
    }

    LabeledData corpus;
    corpus.features = Matrix(static_cast<std::size_t>(classes) * per_class, dim);
    corpus.labels.reserve(corpus.features.rows());
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        Rng rng(derive_seed(seed, detail::kSampleStream, static_cast<std::uint64_t>(c)));
        for (int i = 0; i < per_class; ++i, ++row) {
            for (int j = 0; j < dim; ++j) {
                corpus.features(row, j) = centers(c, j) + spread * rng.normal();
            }
            corpus.labels.push_back(c);
        }
    }
    return corpus;
}

// Label-skew partition: a seed-shuffled permutation of the label space is cut
// into ceil(C/k) subsets of k = ceil(p*C) labels (wrapping when k does not
// divide C), and clients cycle through the subsets. distribution_id is the
// subset index. Each class's samples are split evenly across its owners.
inline std::vector<ClientDataset> partition_label_skew(const LabeledData& corpus,
                                                       const PartitionSpec& spec) {
    if (spec.scheme != PartitionScheme::kLabelSkew) {
        throw PartitionError("partition_label_skew: spec.scheme is not LabelSkew");
    }
    if (spec.label_fraction <= 0.0 || spec.label_fraction > 1.0) {
        throw PartitionError("label_fraction must be in (0, 1]");
    }
    const int classes = num_classes(corpus);
    const int labels_per_client = std::clamp(ceil_fraction(spec.label_fraction, classes), 1, classes);
    const int groups = (classes + labels_per_client - 1) / labels_per_client;

    std::vector<int> perm(static_cast<std::size_t>(classes));
    std::iota(perm.begin(), perm.end(), 0);
    Rng perm_rng(derive_seed(spec.seed, detail::kLabelPermStream));
    perm_rng.shuffle(perm);

    std::vector<std::vector<int>> group_labels(static_cast<std::size_t>(groups));
    for (int g = 0; g < groups; ++g) {
        for (int i = 0; i < labels_per_client; ++i) {
            group_labels[g].push_back(perm[static_cast<std::size_t>((g * labels_per_client + i) % classes)]);
        }
        std::sort(group_labels[g].begin(), group_labels[g].end());
    }

    // Owners of each class, in client order.
    std::vector<std::vector<int>> owners(static_cast<std::size_t>(classes));
    for (int k = 0; k < spec.num_clients; ++k) {
        for (int label : group_labels[static_cast<std::size_t>(k % groups)]) {
            owners[static_cast<std::size_t>(label)].push_back(k);
        }
    }
    for (int c = 0; c < classes; ++c) {
        if (owners[static_cast<std::size_t>(c)].empty()) {
            throw PartitionError("class " + std::to_string(c) +
                                 " is owned by no client (num_clients < label groups)");
        }
    }

    auto class_rows = detail::rows_by_class(corpus);
    std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(spec.num_clients));
    for (int c = 0; c < classes; ++c) {
        auto& rows = class_rows[static_cast<std::size_t>(c)];
        Rng rng(derive_seed(spec.seed, detail::kClassSplitStream, static_cast<std::uint64_t>(c)));
        rng.shuffle(rows);
        const auto& who = owners[static_cast<std::size_t>(c)];
        const std::size_t base = rows.size() / who.size();
        const std::size_t extra = rows.size() % who.size();
        std::size_t cursor = 0;
        for (std::size_t i = 0; i < who.size(); ++i) {
            const std::size_t take = base + (i < extra ? 1 : 0);
            auto& bucket = buckets[static_cast<std::size_t>(who[i])];
            bucket.insert(bucket.end(), rows.begin() + cursor, rows.begin() + cursor + take);
            cursor += take;
        }
    }

    std::vector<ClientDataset> clients;
    clients.reserve(static_cast<std::size_t>(spec.num_clients));
    for (int k = 0; k < spec.num_clients; ++k) {
        clients.push_back(detail::make_client(corpus, k, std::move(buckets[static_cast<std::size_t>(k)]),
                                              k % groups, spec.test_fraction, spec.seed));
    }
    return clients;
}

// Dirichlet partition: per class, client proportions ~ Dir(alpha * 1_N),
// rounded by largest remainder. A client needs at least two samples (one
// train, one test); if any client ends up below that the whole allocation is
// redrawn, up to a bounded retry count.
inline std::vector<ClientDataset> partition_dirichlet(const LabeledData& corpus,
                                                      const PartitionSpec& spec) {
    if (spec.scheme != PartitionScheme::kDirichlet) {
        throw PartitionError("partition_dirichlet: spec.scheme is not Dirichlet");
    }
    if (spec.alpha <= 0.0) throw PartitionError("dirichlet alpha must be > 0");
    const int classes = num_classes(corpus);
    const auto n = static_cast<std::size_t>(spec.num_clients);
    auto class_rows = detail::rows_by_class(corpus);

    constexpr int kMaxAttempts = 100;
    std::vector<std::vector<std::size_t>> buckets;
    for (int attempt = 0;; ++attempt) {
        if (attempt == kMaxAttempts) {
            throw PartitionError("dirichlet partition left a client empty after " +
                                 std::to_string(kMaxAttempts) + " attempts");
        }
        buckets.assign(n, {});
        for (int c = 0; c < classes; ++c) {
            Rng rng(derive_seed(spec.seed, detail::kDirichletStream, static_cast<std::uint64_t>(c),
                                static_cast<std::uint64_t>(attempt)));
            const std::vector<double> props = rng.dirichlet(spec.alpha, n);
            auto rows = class_rows[static_cast<std::size_t>(c)];
            Rng row_rng(derive_seed(spec.seed, detail::kDirichletRowStream,
                                    static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(attempt)));
            row_rng.shuffle(rows);
            const auto counts = detail::largest_remainder(props, rows.size());
            std::size_t cursor = 0;
            for (std::size_t k = 0; k < n; ++k) {
                buckets[k].insert(buckets[k].end(), rows.begin() + cursor,
                                  rows.begin() + cursor + counts[k]);
                cursor += counts[k];
            }
        }
        const bool all_served = std::all_of(buckets.begin(), buckets.end(),
                                            [](const auto& b) { return b.size() >= 2; });
        if (all_served) break;
    }

    std::vector<ClientDataset> clients;
    clients.reserve(n);
    for (int k = 0; k < spec.num_clients; ++k) {
        clients.push_back(detail::make_client(corpus, k, std::move(buckets[static_cast<std::size_t>(k)]),
                                              -1, spec.test_fraction, spec.seed));
    }
    return clients;
}

inline std::vector<ClientDataset> partition_iid(const LabeledData& corpus,
                                                const PartitionSpec& spec) {
    std::vector<std::size_t> rows(corpus.size());
    std::iota(rows.begin(), rows.end(), 0);
    Rng rng(derive_seed(spec.seed, detail::kIidStream));
    rng.shuffle(rows);
    const auto n = static_cast<std::size_t>(spec.num_clients);
    std::vector<ClientDataset> clients;
    clients.reserve(n);
    const std::size_t base = rows.size() / n;
    const std::size_t extra = rows.size() % n;
    std::size_t cursor = 0;
    for (int k = 0; k < spec.num_clients; ++k) {
        const std::size_t take = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
        std::vector<std::size_t> bucket(rows.begin() + cursor, rows.begin() + cursor + take);
        cursor += take;
        clients.push_back(
            detail::make_client(corpus, k, std::move(bucket), 0, spec.test_fraction, spec.seed));
    }
    return clients;
}

inline std::vector<ClientDataset> partition(const LabeledData& corpus, const PartitionSpec& spec) {
    if (corpus.empty()) throw EmptyInputError("partition: empty corpus");
    if (spec.num_clients < 1) throw PartitionError("num_clients must be >= 1");
    if (spec.test_fraction <= 0.0 || spec.test_fraction >= 1.0) {
        throw PartitionError("test_fraction must be in (0, 1)");
    }
    switch (spec.scheme) {
        case PartitionScheme::kLabelSkew: return partition_label_skew(corpus, spec);
        case PartitionScheme::kDirichlet: return partition_dirichlet(corpus, spec);
        case PartitionScheme::kIid: return partition_iid(corpus, spec);
    }
    throw PartitionError("unknown partition scheme");
}

struct ServerSplit {
    LabeledData holdout;    // D^Server, only ever used for inference
    LabeledData remainder;  // what the partitioners may hand to clients
};

// Class-stratified holdout of size m, carved out before partitioning.
inline ServerSplit server_holdout(const LabeledData& corpus, std::size_t m, std::uint64_t seed) {
    if (corpus.empty()) throw EmptyInputError("server_holdout: empty corpus");
    if (m > corpus.size()) {
        throw SizeError("server holdout m=" + std::to_string(m) + " exceeds corpus size " +
                        std::to_string(corpus.size()));
    }
    const int classes = num_classes(corpus);
    auto class_rows = detail::rows_by_class(corpus);

    // Even per-class quotas; classes short on samples push their deficit to
    // the others.
    std::vector<std::size_t> quota(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        quota[static_cast<std::size_t>(c)] =
            m / static_cast<std::size_t>(classes) +
            (static_cast<std::size_t>(c) < m % static_cast<std::size_t>(classes) ? 1 : 0);
    }
    std::size_t deficit = 0;
    for (int c = 0; c < classes; ++c) {
        auto& q = quota[static_cast<std::size_t>(c)];
        const std::size_t avail = class_rows[static_cast<std::size_t>(c)].size();
        if (q > avail) {
            deficit += q - avail;
            q = avail;
        }
    }
    while (deficit > 0) {
        bool placed = false;
        for (int c = 0; c < classes && deficit > 0; ++c) {
            auto& q = quota[static_cast<std::size_t>(c)];
            if (q < class_rows[static_cast<std::size_t>(c)].size()) {
                ++q;
                --deficit;
                placed = true;
            }
        }
        if (!placed) throw SizeError("server_holdout: cannot place all holdout samples");
    }

    std::vector<bool> taken(corpus.size(), false);
    std::vector<std::size_t> holdout_rows;
    holdout_rows.reserve(m);
    for (int c = 0; c < classes; ++c) {
        auto rows = class_rows[static_cast<std::size_t>(c)];
        Rng rng(derive_seed(seed, detail::kHoldoutStream, static_cast<std::uint64_t>(c)));
        rng.shuffle(rows);
        for (std::size_t i = 0; i < quota[static_cast<std::size_t>(c)]; ++i) {
            holdout_rows.push_back(rows[i]);
            taken[rows[i]] = true;
        }
    }
    std::sort(holdout_rows.begin(), holdout_rows.end());
    std::vector<std::size_t> rest_rows;
    rest_rows.reserve(corpus.size() - m);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (!taken[i]) rest_rows.push_back(i);
    }
    return {detail::gather_rows(corpus, holdout_rows), detail::gather_rows(corpus, rest_rows)};
}

// CSV corpus import; header must be f0,...,f{d-1},label.
inline LabeledData load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open csv file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error("csv file is empty: " + path);

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header.back() != "label") {
        throw Error("csv header must be f0,...,f{d-1},label");
    }
    for (std::size_t i = 0; i + 1 < header.size(); ++i) {
        if (header[i] != "f" + std::to_string(i)) {
            throw Error("csv header column " + std::to_string(i) + " must be f" + std::to_string(i));
        }
    }
    const std::size_t dim = header.size() - 1;

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != dim + 1) {
            throw Error("csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(dim + 1) + " columns, got " + std::to_string(cells.size()));
        }
        try {
            for (std::size_t i = 0; i < dim; ++i) values.push_back(std::stod(cells[i]));
            const int label = std::stoi(cells.back());
            if (label < 0) throw std::invalid_argument("negative");
            labels.push_back(label);
        } catch (const std::exception&) {
            throw Error("csv line " + std::to_string(line_no) + ": malformed value");
        }
    }
    if (labels.empty()) throw Error("csv file has no data rows: " + path);

    LabeledData corpus;
    corpus.features = Matrix(labels.size(), dim);
    corpus.features.data() = std::move(values);
    corpus.labels = std::move(labels);
    if (!corpus.features.all_finite()) throw Error("csv contains non-finite features");
    return corpus;
}

}  // namespace flis
