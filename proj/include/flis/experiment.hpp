#pragma once

// End-to-end pipeline behind the CLI: build the corpus, carve the server
// holdout, partition the rest across clients, run the configured federation
// mode, and optionally personalize withheld clients against the final
// cluster models.

#include <optional>

#include "flis/config.hpp"
#include "flis/data.hpp"
#include "flis/federation.hpp"
#include "flis/metrics.hpp"

namespace flis {

struct ExperimentData {
    std::vector<ClientDataset> train_clients;
    std::vector<ClientDataset> unseen_clients;  // withheld from training entirely
    LabeledData server;
};

inline ExperimentData build_experiment_data(const ExperimentConfig& cfg) {
    LabeledData corpus =
        cfg.data.csv_path.empty()
            ? generate_synthetic(cfg.data.num_classes, cfg.data.dim, cfg.data.per_class,
                                 cfg.data.spread, cfg.data.seed)
            : load_csv(cfg.data.csv_path);
    ServerSplit split = server_holdout(corpus, cfg.data.server_holdout, cfg.data.seed);
    std::vector<ClientDataset> clients = partition(split.remainder, cfg.data.partition);

    ExperimentData data;
    data.server = std::move(split.holdout);
    const int total = static_cast<int>(clients.size());
    int withheld = 0;
    if (cfg.personalization.unseen_fraction > 0.0) {
        withheld = std::clamp(ceil_fraction(cfg.personalization.unseen_fraction, total), 0, total - 1);
    }
    for (int k = 0; k < total; ++k) {
        auto& target = k < total - withheld ? data.train_clients : data.unseen_clients;
        target.push_back(std::move(clients[static_cast<std::size_t>(k)]));
    }
    return data;
}

struct ExperimentOutcome {
    RunResult run;
    RunSummary summary;
    std::optional<PersonalizationResult> personalization;
};

inline ExperimentOutcome execute_experiment(const ExperimentConfig& cfg,
                                            const ExperimentData& data) {
    FederationConfig fed = cfg.federation;
    fed.num_clients = static_cast<int>(data.train_clients.size());

    ExperimentOutcome outcome;
    outcome.run = run_federation(fed, data.train_clients, data.server);
    outcome.summary = summarize(outcome.run, data.train_clients, cfg.output.target_accuracy);
    if (!data.unseen_clients.empty()) {
        outcome.personalization = personalize_unseen(
            data.unseen_clients, outcome.run.final_models, cfg.personalization.epochs,
            fed.lr, fed.batch_size, fed.seed);
    }
    return outcome;
}

inline ExperimentOutcome execute_experiment(const ExperimentConfig& cfg) {
    return execute_experiment(cfg, build_experiment_data(cfg));
}

}  // namespace flis
