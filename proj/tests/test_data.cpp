#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "doctest.h"

#include "flis/data.hpp"
#include "test_helpers.hpp"

using namespace flis;

namespace {

std::set<int> label_set(const ClientDataset& client) {
    std::set<int> s(client.train.labels.begin(), client.train.labels.end());
    s.insert(client.test.labels.begin(), client.test.labels.end());
    return s;
}

// Sample identity for disjointness checks: the full feature row as a key.
std::vector<double> row_key(const LabeledData& data, std::size_t r) {
    return {data.features.row(r), data.features.row(r) + data.features.cols()};
}

std::set<std::vector<double>> row_keys(const LabeledData& data) {
    std::set<std::vector<double>> keys;
    for (std::size_t r = 0; r < data.size(); ++r) keys.insert(row_key(data, r));
    return keys;
}

std::map<int, std::size_t> label_counts(const ClientDataset& client) {
    std::map<int, std::size_t> counts;
    for (int y : client.train.labels) ++counts[y];
    for (int y : client.test.labels) ++counts[y];
    return counts;
}

PartitionSpec skew_spec(double p, int clients, std::uint64_t seed = 3) {
    PartitionSpec spec;
    spec.scheme = PartitionScheme::kLabelSkew;
    spec.label_fraction = p;
    spec.num_clients = clients;
    spec.test_fraction = 0.2;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("generate_synthetic produces per_class samples of every label") {
    const LabeledData corpus = generate_synthetic(4, 8, 50, 0.3, 1);
    REQUIRE(corpus.size() == 200);
    std::map<int, int> counts;
    for (int y : corpus.labels) ++counts[y];
    REQUIRE(counts.size() == 4);
    for (const auto& [label, n] : counts) CHECK(n == 50);
    CHECK(corpus.features.all_finite());
}

TEST_CASE("generate_synthetic with spread 0 collapses each class onto its center") {
    const LabeledData corpus = generate_synthetic(3, 4, 10, 0.0, 2);
    for (std::size_t r = 1; r < corpus.size(); ++r) {
        if (corpus.labels[r] != corpus.labels[r - 1]) continue;
        CHECK(row_key(corpus, r) == row_key(corpus, r - 1));
    }
    // Centers are unit-norm.
    for (int c = 0; c < 3; ++c) {
        const std::size_t r = static_cast<std::size_t>(c) * 10;
        double sq = 0.0;
        for (std::size_t j = 0; j < 4; ++j) sq += corpus.features(r, j) * corpus.features(r, j);
        CHECK(std::sqrt(sq) == doctest::Approx(1.0));
    }
}

TEST_CASE("generate_synthetic is deterministic per seed") {
    const LabeledData a = generate_synthetic(4, 6, 20, 0.2, 9);
    const LabeledData b = generate_synthetic(4, 6, 20, 0.2, 9);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    const LabeledData c = generate_synthetic(4, 6, 20, 0.2, 10);
    CHECK(a.features.data() != c.features.data());
}

TEST_CASE("a linear classifier separates the tight-spread corpus") {
    // Train-once oracle establishing separability at spread 0.1.
    const LabeledData corpus = generate_synthetic(4, 8, 50, 0.1, 5);
    ModelParams linear = xavier_init(mlp_shape(8, 0, 4), 6);
    linear = client_update(linear, corpus, 60, 0.5, corpus.size(), 7);
    CHECK(top1_accuracy(linear, corpus) >= 0.99);
}

TEST_CASE("label skew gives every client ceil(p*C) labels") {
    const LabeledData corpus = generate_synthetic(10, 4, 30, 0.2, 11);
    const auto clients = partition_label_skew(corpus, skew_spec(0.2, 10));
    for (const auto& client : clients) {
        CHECK(label_set(client).size() == 2);  // ceil(0.2 * 10), label-set enumeration
    }
}

TEST_CASE("label skew p=1 gives everyone all labels and one distribution id") {
    const LabeledData corpus = generate_synthetic(6, 4, 30, 0.2, 12);
    const auto clients = partition_label_skew(corpus, skew_spec(1.0, 5));
    for (const auto& client : clients) {
        CHECK(label_set(client).size() == 6);
        CHECK(client.distribution_id == 0);
    }
}

TEST_CASE("label skew plants disjoint label pairs as distribution groups") {
    // 8 classes at p=0.2 -> 2 labels each -> 4 disjoint pairs; 8 clients cycle
    // through them, 2 clients per pair.
    const LabeledData corpus = generate_synthetic(8, 4, 40, 0.2, 13);
    const auto clients = partition_label_skew(corpus, skew_spec(0.2, 8));
    std::map<int, std::set<int>> group_labels;
    std::map<int, int> group_count;
    for (const auto& client : clients) {
        const auto labels = label_set(client);
        CHECK(labels.size() == 2);
        auto [it, inserted] = group_labels.emplace(client.distribution_id, labels);
        if (!inserted) CHECK(it->second == labels);
        ++group_count[client.distribution_id];
    }
    REQUIRE(group_labels.size() == 4);
    for (const auto& [group, n] : group_count) CHECK(n == 2);
    // The 4 pairs are disjoint and cover all 8 labels.
    std::set<int> all;
    for (const auto& [group, labels] : group_labels) all.insert(labels.begin(), labels.end());
    CHECK(all.size() == 8);
}

TEST_CASE("label skew errors when a class has no owner") {
    const LabeledData corpus = generate_synthetic(8, 4, 20, 0.2, 14);
    CHECK_THROWS_AS(partition_label_skew(corpus, skew_spec(0.2, 2)), PartitionError);
}

TEST_CASE("dirichlet with huge alpha approaches uniform shares") {
    const LabeledData corpus = generate_synthetic(5, 4, 100, 0.3, 15);
    PartitionSpec spec;
    spec.scheme = PartitionScheme::kDirichlet;
    spec.alpha = 1e6;
    spec.num_clients = 10;
    spec.test_fraction = 0.2;
    spec.seed = 16;
    const auto clients = partition_dirichlet(corpus, spec);
    for (const auto& client : clients) {
        for (const auto& [label, n] : label_counts(client)) {
            const double share = static_cast<double>(n) / 100.0;
            CHECK(std::abs(share - 0.1) <= 0.05);
        }
    }
}

TEST_CASE("dirichlet with alpha 0.1 concentrates client mass on few classes") {
    const LabeledData corpus = generate_synthetic(8, 4, 100, 0.3, 17);
    PartitionSpec spec;
    spec.scheme = PartitionScheme::kDirichlet;
    spec.alpha = 0.1;
    spec.num_clients = 10;
    spec.test_fraction = 0.2;
    spec.seed = 18;
    const auto clients = partition_dirichlet(corpus, spec);
    bool concentrated = false;
    for (const auto& client : clients) {
        std::vector<std::size_t> counts;
        std::size_t total = 0;
        for (const auto& [label, n] : label_counts(client)) {
            counts.push_back(n);
            total += n;
        }
        std::sort(counts.rbegin(), counts.rend());
        std::size_t top2 = counts[0] + (counts.size() > 1 ? counts[1] : 0);
        if (static_cast<double>(top2) > 0.5 * static_cast<double>(total)) concentrated = true;
    }
    CHECK(concentrated);
}

TEST_CASE("dirichlet conserves every corpus sample") {
    const LabeledData corpus = generate_synthetic(6, 4, 40, 0.3, 19);
    PartitionSpec spec;
    spec.scheme = PartitionScheme::kDirichlet;
    spec.alpha = 0.5;
    spec.num_clients = 7;
    spec.test_fraction = 0.25;
    spec.seed = 20;
    const auto clients = partition_dirichlet(corpus, spec);
    std::size_t total = 0;
    for (const auto& client : clients) total += client.train.size() + client.test.size();
    CHECK(total == corpus.size());
    for (const auto& client : clients) {
        CHECK(client.size() == client.train.size());
        CHECK(client.distribution_id == -1);
        CHECK(client.size() >= 1);
    }
}

TEST_CASE("dirichlet raises a partition error once the retry budget is spent") {
    // 4 samples across 10 clients can never serve everyone.
    const LabeledData corpus = generate_synthetic(2, 4, 2, 0.3, 30);
    PartitionSpec spec;
    spec.scheme = PartitionScheme::kDirichlet;
    spec.alpha = 0.5;
    spec.num_clients = 10;
    spec.test_fraction = 0.2;
    spec.seed = 31;
    CHECK_THROWS_AS(partition_dirichlet(corpus, spec), PartitionError);
}

TEST_CASE("partitions are deterministic functions of corpus and spec") {
    const LabeledData corpus = generate_synthetic(6, 4, 40, 0.3, 21);
    for (auto scheme : {PartitionScheme::kLabelSkew, PartitionScheme::kDirichlet,
                        PartitionScheme::kIid}) {
        PartitionSpec spec;
        spec.scheme = scheme;
        spec.label_fraction = 0.34;
        spec.alpha = 0.4;
        spec.num_clients = 5;
        spec.test_fraction = 0.2;
        spec.seed = 22;
        const auto a = partition(corpus, spec);
        const auto b = partition(corpus, spec);
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(a[k].train.features == b[k].train.features);
            CHECK(a[k].test.features == b[k].test.features);
            CHECK(a[k].distribution_id == b[k].distribution_id);
        }
    }
}

TEST_CASE("no sample lands in two clients or in clients and the server holdout") {
    const LabeledData corpus = generate_synthetic(6, 8, 40, 0.3, 23);
    const ServerSplit split = server_holdout(corpus, 60, 23);
    const auto clients = partition_label_skew(split.remainder, skew_spec(0.5, 6, 24));
    const auto server_keys = row_keys(split.holdout);
    std::set<std::vector<double>> seen;
    std::size_t total = 0;
    for (const auto& client : clients) {
        for (const auto& part : {client.train, client.test}) {
            for (std::size_t r = 0; r < part.size(); ++r) {
                const auto key = row_key(part, r);
                CHECK(!server_keys.count(key));       // set-intersection oracle
                CHECK(seen.insert(key).second);       // no duplicates across clients
                ++total;
            }
        }
    }
    CHECK(total == corpus.size() - 60);
}

TEST_CASE("server holdout of the whole corpus returns everything") {
    const LabeledData corpus = generate_synthetic(4, 4, 10, 0.3, 25);
    const ServerSplit split = server_holdout(corpus, corpus.size(), 25);
    CHECK(split.holdout.size() == corpus.size());
    CHECK(split.remainder.size() == 0);
    CHECK(row_keys(split.holdout) == row_keys(corpus));
}

TEST_CASE("server holdout is class-stratified within one sample") {
    const LabeledData corpus = generate_synthetic(5, 4, 40, 0.3, 26);
    const ServerSplit split = server_holdout(corpus, 52, 26);
    std::map<int, std::size_t> counts;
    for (int y : split.holdout.labels) ++counts[y];
    REQUIRE(counts.size() == 5);
    std::size_t lo = split.holdout.size(), hi = 0;
    for (const auto& [label, n] : counts) {
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
}

TEST_CASE("server holdout larger than the corpus raises a size error") {
    const LabeledData corpus = generate_synthetic(4, 4, 5, 0.3, 27);
    CHECK_THROWS_AS(server_holdout(corpus, corpus.size() + 1, 27), SizeError);
}

TEST_CASE("csv import round-trips a small corpus") {
    const LabeledData corpus = generate_synthetic(3, 4, 6, 0.2, 28);
    const std::string path = "test_corpus.csv";
    {
        std::ofstream out(path);
        out << "f0,f1,f2,f3,label\n";
        out.precision(17);
        for (std::size_t r = 0; r < corpus.size(); ++r) {
            for (std::size_t c = 0; c < 4; ++c) out << corpus.features(r, c) << ',';
            out << corpus.labels[r] << '\n';
        }
    }
    const LabeledData loaded = load_csv(path);
    std::remove(path.c_str());
    REQUIRE(loaded.size() == corpus.size());
    CHECK(loaded.labels == corpus.labels);
    for (std::size_t r = 0; r < corpus.size(); ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(loaded.features(r, c) == doctest::Approx(corpus.features(r, c)).epsilon(1e-15));
        }
    }
}

TEST_CASE("csv import rejects malformed headers and rows") {
    const std::string path = "test_bad.csv";
    {
        std::ofstream out(path);
        out << "x0,x1,label\n1,2,0\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("header"), Error);
    {
        std::ofstream out(path);
        out << "f0,f1,label\n1,2,0\n1,oops,1\n";
    }
    CHECK_THROWS_WITH_AS(load_csv(path), doctest::Contains("line 3"), Error);
    std::remove(path.c_str());
}

TEST_SUITE_END();
