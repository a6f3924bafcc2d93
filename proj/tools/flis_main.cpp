// flis: configuration-driven entry point for the clustered federated
// learning simulator.
//
//   flis run <config.json> [--seed k] [--out dir]   one full federation run
//   flis sweep <config.json> [--seed k] [--out dir] beta x epochs grid (DC)
//   flis report <dir> --target 0.8                  rounds/cost to target

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flis/config.hpp"
#include "flis/experiment.hpp"
#include "flis/metrics.hpp"
#include "flis/serialize.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

flis::ExperimentConfig load_with_overrides(const CommonArgs& args) {
    flis::ExperimentConfig cfg = flis::load_config(args.config_path);
    if (args.seed) {
        cfg.data.seed = *args.seed;
        cfg.data.partition.seed = *args.seed;
        cfg.federation.seed = *args.seed;
    }
    if (args.out_dir) cfg.output.dir = *args.out_dir;
    return cfg;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw flis::Error("cannot write " + path.string());
    out << content;
}

int cmd_run(const CommonArgs& args) {
    const flis::ExperimentConfig cfg = load_with_overrides(args);
    const flis::ExperimentData data = flis::build_experiment_data(cfg);
    const flis::ExperimentOutcome outcome = flis::execute_experiment(cfg, data);

    const std::filesystem::path dir(cfg.output.dir);
    std::filesystem::create_directories(dir);
    write_file(dir / "config_resolved.json", flis::resolved_json(cfg).dump(2) + "\n");

    std::ostringstream rounds;
    flis::write_rounds_jsonl(outcome.run, rounds);
    write_file(dir / "rounds.jsonl", rounds.str());

    nlohmann::json summary = flis::to_json(outcome.summary);
    if (outcome.personalization) summary["unseen"] = flis::to_json(*outcome.personalization);
    write_file(dir / "summary.json", summary.dump(2) + "\n");

    // Realized adjacency scale, so beta can be picked against actual values.
    std::optional<double> a_max;
    for (auto it = outcome.run.records.rbegin(); it != outcome.run.records.rend(); ++it) {
        if (it->adjacency) {
            a_max = it->adjacency->max_off_diagonal();
            break;
        }
    }

    std::cout << "mode=" << flis::to_string(outcome.run.mode)
              << " rounds=" << outcome.summary.accuracy_series.size()
              << " final_accuracy=" << outcome.summary.final_accuracy
              << " comm_cost_mb=" << outcome.summary.comm_cost_mb;
    if (a_max) std::cout << " a_max=" << *a_max;
    if (outcome.personalization) {
        std::cout << " unseen_accuracy=" << outcome.personalization->mean_accuracy;
    }
    std::cout << " out=" << dir.string() << "\n";
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    const flis::ExperimentConfig cfg = load_with_overrides(args);
    if (!cfg.sweep) throw flis::ConfigError("sweep requires a 'sweep' section in the config");
    const flis::ExperimentData data = flis::build_experiment_data(cfg);

    flis::FederationConfig base = cfg.federation;
    base.num_clients = static_cast<int>(data.train_clients.size());
    const auto rows =
        flis::sweep(base, cfg.sweep->betas, cfg.sweep->epochs, data.train_clients, data.server);

    const std::filesystem::path dir(cfg.output.dir);
    std::filesystem::create_directories(dir);
    write_file(dir / "config_resolved.json", flis::resolved_json(cfg).dump(2) + "\n");
    std::ostringstream csv;
    flis::write_sweep_csv(rows, csv);
    write_file(dir / "sweep.csv", csv.str());

    std::cout << "sweep rows=" << rows.size() << " out=" << (dir / "sweep.csv").string() << "\n";
    return 0;
}

struct ReportRow {
    std::string run;
    std::string mode;
    std::optional<int> rounds_to_target;
    std::optional<double> cost_to_target_mb;
    double final_accuracy = 0.0;
    double total_mb = 0.0;
};

ReportRow report_one(const std::filesystem::path& jsonl, double target) {
    std::ifstream in(jsonl);
    if (!in) throw flis::Error("cannot open " + jsonl.string());
    ReportRow row;
    row.run = jsonl.parent_path().string();
    std::vector<double> series;
    std::vector<double> cumulative_mb;
    std::uint64_t bytes = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        row.mode = j.at("mode").get<std::string>();
        bytes += j.at("bytes_down").get<std::uint64_t>() + j.at("bytes_up").get<std::uint64_t>();
        if (j.at("round").get<int>() < 1) continue;  // HC warm-up round
        series.push_back(j.at("mean_accuracy").get<double>());
        cumulative_mb.push_back(static_cast<double>(bytes) / 1e6);
    }
    if (series.empty()) throw flis::Error("no round records in " + jsonl.string());
    row.final_accuracy = series.back();
    row.total_mb = static_cast<double>(bytes) / 1e6;
    row.rounds_to_target = flis::rounds_to_target(series, target);
    if (row.rounds_to_target) {
        row.cost_to_target_mb = cumulative_mb[static_cast<std::size_t>(*row.rounds_to_target) - 1];
    }
    return row;
}

int cmd_report(const std::string& dir_arg, double target) {
    const std::filesystem::path dir(dir_arg);
    std::vector<std::filesystem::path> inputs;
    if (std::filesystem::exists(dir / "rounds.jsonl")) inputs.push_back(dir / "rounds.jsonl");
    if (std::filesystem::is_directory(dir)) {
        std::vector<std::filesystem::path> subdirs;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.is_directory() && std::filesystem::exists(entry.path() / "rounds.jsonl")) {
                subdirs.push_back(entry.path() / "rounds.jsonl");
            }
        }
        std::sort(subdirs.begin(), subdirs.end());
        inputs.insert(inputs.end(), subdirs.begin(), subdirs.end());
    }
    if (inputs.empty()) throw flis::Error("no rounds.jsonl found under " + dir_arg);

    std::cout << std::left << std::setw(28) << "run" << std::setw(8) << "mode" << std::setw(18)
              << "rounds_to_target" << std::setw(20) << "cost_to_target_mb" << std::setw(12)
              << "final_acc" << "total_mb\n";
    for (const auto& input : inputs) {
        const ReportRow row = report_one(input, target);
        std::cout << std::left << std::setw(28) << row.run << std::setw(8) << row.mode;
        // "--" marks a run that never reached the target.
        std::cout << std::setw(18)
                  << (row.rounds_to_target ? std::to_string(*row.rounds_to_target) : "--");
        std::ostringstream cost;
        if (row.cost_to_target_mb) {
            cost << std::fixed << std::setprecision(3) << *row.cost_to_target_mb;
        } else {
            cost << "--";
        }
        std::cout << std::setw(20) << cost.str() << std::setw(12) << std::fixed
                  << std::setprecision(4) << row.final_accuracy << std::setprecision(3)
                  << row.total_mb << "\n";
        std::cout.unsetf(std::ios::fixed);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FLIS clustered federated learning simulator"};
    app.require_subcommand(1);

    CommonArgs run_args;
    auto* run = app.add_subcommand("run", "execute one federation run");
    run->add_option("config", run_args.config_path, "experiment config (JSON)")->required();
    run->add_option("--seed", run_args.seed, "override data/partition/federation seeds");
    run->add_option("--out", run_args.out_dir, "override output directory");

    CommonArgs sweep_args;
    auto* sweep = app.add_subcommand("sweep", "run the beta x local-epoch grid (FLIS DC)");
    sweep->add_option("config", sweep_args.config_path, "experiment config (JSON)")->required();
    sweep->add_option("--seed", sweep_args.seed, "override data/partition/federation seeds");
    sweep->add_option("--out", sweep_args.out_dir, "override output directory");

    std::string report_dir;
    double report_target = 0.0;
    auto* report = app.add_subcommand("report", "rounds and Mb needed to reach a target accuracy");
    report->add_option("dir", report_dir, "run directory (or parent of run directories)")
        ->required();
    report->add_option("--target", report_target, "target average local test accuracy")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args);
        if (report->parsed()) return cmd_report(report_dir, report_target);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
