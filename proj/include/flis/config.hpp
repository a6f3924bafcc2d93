#pragma once

// Experiment configuration: a single JSON document with data, federation,
// output and optional personalization/sweep sections. Loading fills every
// default and can echo the fully-resolved document back, so a run directory
// always records the exact configuration that produced it.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flis/data.hpp"
#include "flis/error.hpp"
#include "flis/federation.hpp"

namespace flis {

struct DataConfig {
    int num_classes = 8;
    int dim = 16;
    int per_class = 80;
    double spread = 0.5;
    std::uint64_t seed = 1;
    std::string csv_path;          // non-empty replaces the synthetic generator
    std::size_t server_holdout = 200;
    PartitionSpec partition;
};

struct PersonalizationConfig {
    double unseen_fraction = 0.0;  // share of clients withheld from training
    int epochs = 5;
};

struct OutputConfig {
    std::string dir = "out";
    std::optional<double> target_accuracy;
};

struct SweepConfig {
    std::vector<double> betas;
    std::vector<int> epochs;
};

struct ExperimentConfig {
    DataConfig data;
    FederationConfig federation;
    PersonalizationConfig personalization;
    OutputConfig output;
    std::optional<SweepConfig> sweep;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& section,
                                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("section '" + section + "' must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
    }
}

template <class T>
T get_field(const nlohmann::json& j, const std::string& section, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("field '" + section + "." + key + "' has the wrong type");
    }
}

inline FedMode parse_mode(const std::string& s) {
    if (s == "dc") return FedMode::kDc;
    if (s == "hc") return FedMode::kHc;
    if (s == "fedavg") return FedMode::kFedAvg;
    if (s == "solo") return FedMode::kSolo;
    throw ConfigError("federation.mode must be one of dc, hc, fedavg, solo (got '" + s + "')");
}

inline PartitionScheme parse_scheme(const std::string& s) {
    if (s == "label_skew") return PartitionScheme::kLabelSkew;
    if (s == "dirichlet") return PartitionScheme::kDirichlet;
    if (s == "iid") return PartitionScheme::kIid;
    throw ConfigError("data.partition.scheme must be one of label_skew, dirichlet, iid (got '" +
                      s + "')");
}

inline InferenceMode parse_inference_mode(const std::string& s) {
    if (s == "one_hot") return InferenceMode::kOneHot;
    if (s == "soft") return InferenceMode::kSoft;
    throw ConfigError("federation.inference_mode must be one_hot or soft (got '" + s + "')");
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
    detail::reject_unknown_keys(root, "(top level)",
                                {"data", "federation", "personalization", "output", "sweep"});
    ExperimentConfig cfg;

    if (!root.contains("data")) throw ConfigError("missing required section 'data'");
    {
        const auto& d = root.at("data");
        detail::reject_unknown_keys(d, "data",
                                    {"num_classes", "dim", "per_class", "spread", "seed",
                                     "csv_path", "server_holdout", "partition"});
        cfg.data.num_classes = detail::get_field(d, "data", "num_classes", cfg.data.num_classes);
        cfg.data.dim = detail::get_field(d, "data", "dim", cfg.data.dim);
        cfg.data.per_class = detail::get_field(d, "data", "per_class", cfg.data.per_class);
        cfg.data.spread = detail::get_field(d, "data", "spread", cfg.data.spread);
        cfg.data.seed = detail::get_field(d, "data", "seed", cfg.data.seed);
        cfg.data.csv_path = detail::get_field(d, "data", "csv_path", cfg.data.csv_path);
        cfg.data.server_holdout =
            detail::get_field(d, "data", "server_holdout", cfg.data.server_holdout);

        if (!d.contains("partition")) throw ConfigError("missing required section 'data.partition'");
        const auto& p = d.at("partition");
        detail::reject_unknown_keys(p, "data.partition",
                                    {"scheme", "label_fraction", "alpha", "num_clients",
                                     "test_fraction", "seed"});
        auto& spec = cfg.data.partition;
        spec.scheme = detail::parse_scheme(
            detail::get_field<std::string>(p, "data.partition", "scheme", "label_skew"));
        spec.label_fraction =
            detail::get_field(p, "data.partition", "label_fraction", 0.25);
        spec.alpha = detail::get_field(p, "data.partition", "alpha", 0.5);
        if (!p.contains("num_clients")) {
            throw ConfigError("missing required field 'data.partition.num_clients'");
        }
        spec.num_clients = detail::get_field(p, "data.partition", "num_clients", 0);
        spec.test_fraction = detail::get_field(p, "data.partition", "test_fraction", 0.2);
        spec.seed = detail::get_field(p, "data.partition", "seed", cfg.data.seed);
    }

    if (!root.contains("federation")) throw ConfigError("missing required section 'federation'");
    {
        const auto& f = root.at("federation");
        detail::reject_unknown_keys(f, "federation",
                                    {"mode", "sample_rate", "rounds", "local_epochs", "lr",
                                     "batch_size", "beta", "inference_mode",
                                     "hc_distance_threshold", "hidden_units", "seed"});
        if (!f.contains("mode")) throw ConfigError("missing required field 'federation.mode'");
        auto& fed = cfg.federation;
        fed.mode = detail::parse_mode(detail::get_field<std::string>(f, "federation", "mode", ""));
        fed.sample_rate = detail::get_field(f, "federation", "sample_rate", 1.0);
        fed.rounds = detail::get_field(f, "federation", "rounds", 10);
        fed.local_epochs = detail::get_field(f, "federation", "local_epochs", 1);
        fed.lr = detail::get_field(f, "federation", "lr", 0.05);
        fed.batch_size = detail::get_field<std::size_t>(f, "federation", "batch_size", 32);
        fed.beta = detail::get_field(f, "federation", "beta", 0.05);
        fed.inference_mode = detail::parse_inference_mode(
            detail::get_field<std::string>(f, "federation", "inference_mode", "one_hot"));
        fed.hc_distance_threshold =
            detail::get_field(f, "federation", "hc_distance_threshold", 0.02);
        fed.hidden_units = detail::get_field(f, "federation", "hidden_units", 32);
        fed.seed = detail::get_field<std::uint64_t>(f, "federation", "seed", 7);
        fed.num_clients = cfg.data.partition.num_clients;  // adjusted later for unseen clients
    }

    if (root.contains("personalization")) {
        const auto& p = root.at("personalization");
        detail::reject_unknown_keys(p, "personalization", {"unseen_fraction", "epochs"});
        cfg.personalization.unseen_fraction =
            detail::get_field(p, "personalization", "unseen_fraction", 0.0);
        cfg.personalization.epochs = detail::get_field(p, "personalization", "epochs", 5);
    }

    if (root.contains("output")) {
        const auto& o = root.at("output");
        detail::reject_unknown_keys(o, "output", {"dir", "target_accuracy"});
        cfg.output.dir = detail::get_field(o, "output", "dir", cfg.output.dir);
        if (o.contains("target_accuracy") && !o.at("target_accuracy").is_null()) {
            cfg.output.target_accuracy = detail::get_field(o, "output", "target_accuracy", 0.0);
        }
    }

    if (root.contains("sweep")) {
        const auto& s = root.at("sweep");
        detail::reject_unknown_keys(s, "sweep", {"betas", "epochs"});
        SweepConfig sweep;
        sweep.betas = detail::get_field(s, "sweep", "betas", std::vector<double>{});
        sweep.epochs = detail::get_field(s, "sweep", "epochs", std::vector<int>{});
        cfg.sweep = std::move(sweep);
    }

    // Field validation. Every message names the offending field.
    const auto& d = cfg.data;
    if (d.csv_path.empty()) {
        if (d.num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
        if (d.dim < 2) throw ConfigError("data.dim must be >= 2");
        if (d.per_class < 1) throw ConfigError("data.per_class must be >= 1");
        if (d.spread < 0.0) throw ConfigError("data.spread must be >= 0");
    }
    const auto& spec = d.partition;
    if (spec.num_clients < 1) throw ConfigError("data.partition.num_clients must be >= 1");
    if (spec.test_fraction <= 0.0 || spec.test_fraction >= 1.0) {
        throw ConfigError("data.partition.test_fraction must be in (0, 1)");
    }
    if (spec.scheme == PartitionScheme::kLabelSkew &&
        (spec.label_fraction <= 0.0 || spec.label_fraction > 1.0)) {
        throw ConfigError("data.partition.label_fraction must be in (0, 1]");
    }
    if (spec.scheme == PartitionScheme::kDirichlet && spec.alpha <= 0.0) {
        throw ConfigError("data.partition.alpha must be > 0");
    }
    const auto& fed = cfg.federation;
    if (fed.sample_rate <= 0.0 || fed.sample_rate > 1.0) {
        throw ConfigError("federation.sample_rate must be in (0, 1]");
    }
    if (fed.rounds < 1) throw ConfigError("federation.rounds must be >= 1");
    if (fed.local_epochs < 1) throw ConfigError("federation.local_epochs must be >= 1");
    if (fed.lr <= 0.0) throw ConfigError("federation.lr must be > 0");
    if (fed.batch_size < 1) throw ConfigError("federation.batch_size must be >= 1");
    if (fed.beta < 0.0 || fed.beta > 1.0) throw ConfigError("federation.beta must be in [0, 1]");
    if (fed.hc_distance_threshold <= 0.0) {
        throw ConfigError("federation.hc_distance_threshold must be > 0");
    }
    if (fed.hidden_units < 0) throw ConfigError("federation.hidden_units must be >= 0");
    if ((fed.mode == FedMode::kDc || fed.mode == FedMode::kHc) && d.server_holdout < 2) {
        throw ConfigError("data.server_holdout must be >= 2 for modes dc and hc");
    }
    const auto& per = cfg.personalization;
    if (per.unseen_fraction < 0.0 || per.unseen_fraction >= 1.0) {
        throw ConfigError("personalization.unseen_fraction must be in [0, 1)");
    }
    if (per.epochs < 0) throw ConfigError("personalization.epochs must be >= 0");
    if (cfg.sweep) {
        if (cfg.sweep->betas.empty()) throw ConfigError("sweep.betas must be non-empty");
        if (cfg.sweep->epochs.empty()) throw ConfigError("sweep.epochs must be non-empty");
        for (double b : cfg.sweep->betas) {
            if (b < 0.0 || b > 1.0) throw ConfigError("sweep.betas entries must be in [0, 1]");
        }
        for (int e : cfg.sweep->epochs) {
            if (e < 1) throw ConfigError("sweep.epochs entries must be >= 1");
        }
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // Convert the byte offset into a line number for the message.
        std::size_t line = 1;
        for (std::size_t i = 0; i < text.size() && i + 1 < e.byte; ++i) {
            if (text[i] == '\n') ++line;
        }
        throw ConfigError("config parse error in " + path + " at line " + std::to_string(line) +
                          ": " + e.what());
    }
    return parse_config(root);
}

inline std::string scheme_string(PartitionScheme scheme) {
    switch (scheme) {
        case PartitionScheme::kLabelSkew: return "label_skew";
        case PartitionScheme::kDirichlet: return "dirichlet";
        case PartitionScheme::kIid: return "iid";
    }
    return "?";
}

// Fully-resolved configuration with every default made explicit.
inline nlohmann::json resolved_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["data"] = {{"num_classes", cfg.data.num_classes},
                 {"dim", cfg.data.dim},
                 {"per_class", cfg.data.per_class},
                 {"spread", cfg.data.spread},
                 {"seed", cfg.data.seed},
                 {"csv_path", cfg.data.csv_path},
                 {"server_holdout", cfg.data.server_holdout},
                 {"partition",
                  {{"scheme", scheme_string(cfg.data.partition.scheme)},
                   {"label_fraction", cfg.data.partition.label_fraction},
                   {"alpha", cfg.data.partition.alpha},
                   {"num_clients", cfg.data.partition.num_clients},
                   {"test_fraction", cfg.data.partition.test_fraction},
                   {"seed", cfg.data.partition.seed}}}};
    j["federation"] = {{"mode", to_string(cfg.federation.mode)},
                       {"sample_rate", cfg.federation.sample_rate},
                       {"rounds", cfg.federation.rounds},
                       {"local_epochs", cfg.federation.local_epochs},
                       {"lr", cfg.federation.lr},
                       {"batch_size", cfg.federation.batch_size},
                       {"beta", cfg.federation.beta},
                       {"inference_mode",
                        cfg.federation.inference_mode == InferenceMode::kOneHot ? "one_hot" : "soft"},
                       {"hc_distance_threshold", cfg.federation.hc_distance_threshold},
                       {"hidden_units", cfg.federation.hidden_units},
                       {"seed", cfg.federation.seed}};
    j["personalization"] = {{"unseen_fraction", cfg.personalization.unseen_fraction},
                            {"epochs", cfg.personalization.epochs}};
    j["output"] = {{"dir", cfg.output.dir},
                   {"target_accuracy", cfg.output.target_accuracy
                                           ? nlohmann::json(*cfg.output.target_accuracy)
                                           : nlohmann::json(nullptr)}};
    if (cfg.sweep) {
        j["sweep"] = {{"betas", cfg.sweep->betas}, {"epochs", cfg.sweep->epochs}};
    }
    return j;
}

}  // namespace flis
