#include <cstdio>
#include <fstream>

#include "doctest.h"

#include "flis/config.hpp"
#include "flis/experiment.hpp"

using namespace flis;

namespace {

nlohmann::json minimal_config() {
    return nlohmann::json{{"data", {{"partition", {{"num_clients", 4}}}}},
                          {"federation", {{"mode", "fedavg"}}}};
}

}  // namespace

TEST_SUITE_BEGIN("config");

TEST_CASE("a minimal config fills every default") {
    const ExperimentConfig cfg = parse_config(minimal_config());
    CHECK(cfg.federation.mode == FedMode::kFedAvg);
    CHECK(cfg.data.partition.num_clients == 4);
    CHECK(cfg.data.num_classes == 8);
    CHECK(cfg.data.dim == 16);
    CHECK(cfg.data.server_holdout == 200);
    CHECK(cfg.data.partition.scheme == PartitionScheme::kLabelSkew);
    CHECK(cfg.data.partition.test_fraction == 0.2);
    CHECK(cfg.data.partition.seed == cfg.data.seed);
    CHECK(cfg.federation.sample_rate == 1.0);
    CHECK(cfg.federation.lr == 0.05);      // non-paper default, echoed for audit
    CHECK(cfg.federation.batch_size == 32);  // non-paper default, echoed for audit
    CHECK(cfg.federation.local_epochs == 1);
    CHECK(cfg.personalization.unseen_fraction == 0.0);
    CHECK(cfg.output.dir == "out");
    CHECK(!cfg.sweep.has_value());
}

TEST_CASE("validation errors name the offending field") {
    auto bad_rate = minimal_config();
    bad_rate["federation"]["sample_rate"] = 0.0;
    CHECK_THROWS_WITH_AS(parse_config(bad_rate), doctest::Contains("federation.sample_rate"),
                         ConfigError);

    auto bad_beta = minimal_config();
    bad_beta["federation"]["beta"] = 1.5;
    CHECK_THROWS_WITH_AS(parse_config(bad_beta), doctest::Contains("federation.beta"), ConfigError);

    auto bad_fraction = minimal_config();
    bad_fraction["data"]["partition"]["test_fraction"] = 1.0;
    CHECK_THROWS_WITH_AS(parse_config(bad_fraction),
                         doctest::Contains("data.partition.test_fraction"), ConfigError);

    auto bad_type = minimal_config();
    bad_type["federation"]["rounds"] = "ten";
    CHECK_THROWS_WITH_AS(parse_config(bad_type), doctest::Contains("federation.rounds"),
                         ConfigError);
}

TEST_CASE("unknown keys are rejected by name") {
    auto cfg = minimal_config();
    cfg["federation"]["momentum"] = 0.9;
    CHECK_THROWS_WITH_AS(parse_config(cfg), doctest::Contains("momentum"), ConfigError);

    auto cfg2 = minimal_config();
    cfg2["extras"] = 1;
    CHECK_THROWS_WITH_AS(parse_config(cfg2), doctest::Contains("extras"), ConfigError);
}

TEST_CASE("missing required fields are named") {
    nlohmann::json no_mode{{"data", {{"partition", {{"num_clients", 4}}}}},
                           {"federation", nlohmann::json::object()}};
    CHECK_THROWS_WITH_AS(parse_config(no_mode), doctest::Contains("federation.mode"), ConfigError);
    nlohmann::json no_clients{{"data", {{"partition", nlohmann::json::object()}}},
                              {"federation", {{"mode", "solo"}}}};
    CHECK_THROWS_WITH_AS(parse_config(no_clients), doctest::Contains("num_clients"), ConfigError);
}

TEST_CASE("the resolved config is a fixed point of parsing") {
    auto raw = minimal_config();
    raw["federation"]["rounds"] = 3;
    raw["sweep"] = {{"betas", {0.0, 0.1}}, {"epochs", {1}}};
    const ExperimentConfig cfg = parse_config(raw);
    const nlohmann::json resolved = resolved_json(cfg);
    const ExperimentConfig reparsed = parse_config(resolved);
    CHECK(resolved_json(reparsed).dump() == resolved.dump());
}

TEST_CASE("config parse errors carry the line number") {
    const std::string path = "test_broken.json";
    {
        std::ofstream out(path);
        out << "{\n  \"data\": {},\n  oops\n}\n";
    }
    CHECK_THROWS_WITH_AS(load_config(path), doctest::Contains("line 3"), ConfigError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_config("does_not_exist.json"), ConfigError);
}

TEST_CASE("executing a minimal experiment end to end is deterministic") {
    auto raw = minimal_config();
    raw["data"]["per_class"] = 30;
    raw["data"]["server_holdout"] = 20;
    raw["federation"]["rounds"] = 2;
    raw["federation"]["hidden_units"] = 8;
    const ExperimentConfig cfg = parse_config(raw);
    const ExperimentOutcome a = execute_experiment(cfg);
    const ExperimentOutcome b = execute_experiment(cfg);
    CHECK(a.summary.final_accuracy == b.summary.final_accuracy);
    CHECK(a.summary.comm_cost_mb == b.summary.comm_cost_mb);
    CHECK(a.run.records.size() == 2);
}

TEST_CASE("a csv corpus replaces the synthetic generator") {
    const LabeledData corpus = generate_synthetic(4, 3, 12, 0.2, 90);
    const std::string path = "test_config_corpus.csv";
    {
        std::ofstream out(path);
        out << "f0,f1,f2,label\n";
        out.precision(17);
        for (std::size_t r = 0; r < corpus.size(); ++r) {
            out << corpus.features(r, 0) << ',' << corpus.features(r, 1) << ','
                << corpus.features(r, 2) << ',' << corpus.labels[r] << '\n';
        }
    }
    auto raw = minimal_config();
    raw["data"]["csv_path"] = path;
    raw["data"]["partition"]["scheme"] = "iid";
    raw["data"]["server_holdout"] = 8;
    raw["data"]["partition"]["num_clients"] = 2;
    const ExperimentData data = build_experiment_data(parse_config(raw));
    std::remove(path.c_str());
    CHECK(data.server.size() == 8);
    CHECK(data.train_clients.size() == 2);
    std::size_t total = data.server.size();
    for (const auto& c : data.train_clients) total += c.train.size() + c.test.size();
    CHECK(total == corpus.size());
    CHECK(data.train_clients[0].train.features.cols() == 3);
}

TEST_CASE("unseen clients are withheld from training") {
    auto raw = minimal_config();
    raw["data"]["partition"]["num_clients"] = 8;
    raw["data"]["per_class"] = 40;
    raw["data"]["server_holdout"] = 40;
    raw["federation"]["rounds"] = 2;
    raw["federation"]["hidden_units"] = 8;
    raw["personalization"] = {{"unseen_fraction", 0.2}, {"epochs", 2}};
    const ExperimentConfig cfg = parse_config(raw);
    const ExperimentData data = build_experiment_data(cfg);
    CHECK(data.train_clients.size() == 6);  // ceil(0.2 * 8) = 2 withheld
    CHECK(data.unseen_clients.size() == 2);
    const ExperimentOutcome outcome = execute_experiment(cfg, data);
    REQUIRE(outcome.personalization.has_value());
    CHECK(outcome.personalization->accuracy.size() == 2);
    for (const auto& rec : outcome.run.records) {
        for (int id : rec.sampled) CHECK(id < 6);
    }
}

TEST_SUITE_END();
