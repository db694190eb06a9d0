#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dfl/dfl.hpp"

namespace fs = std::filesystem;

namespace {

// Config keys that can be given as --key flags; flags override file values.
const std::vector<std::string> kConfigKeys = {
    "clients", "rounds", "epochs", "batch_size", "learning_rate", "lambda", "n_best",
    "loss_source", "model", "hidden_dims", "seed", "train_fraction", "sharing", "data",
    "synth_dim", "synth_spread", "synth_counts", "synth_shared_means",
};

struct KeyFlags {
    std::map<std::string, std::string> values;

    void attach(CLI::App* cmd) {
        for (const auto& key : kConfigKeys) {
            std::string flag = "--" + key;
            std::replace(flag.begin(), flag.end(), '_', '-');
            cmd->add_option(flag, values[key], "config key '" + key + "'");
        }
    }

    dfl::KeyValueMap overrides(const CLI::App* cmd) const {
        dfl::KeyValueMap out;
        for (const auto& key : kConfigKeys) {
            std::string flag = "--" + key;
            std::replace(flag.begin(), flag.end(), '_', '-');
            if (cmd->count(flag) > 0) out[key] = values.at(key);
        }
        return out;
    }
};

fs::path output_root(const std::string& out_flag) {
    if (!out_flag.empty()) return out_flag;
    if (const char* env = std::getenv("DFL_OUT"); env && *env) return env;
    return "out";
}

std::vector<double> parse_double_list(const std::string& name, const std::string& text) {
    std::vector<double> out;
    for (auto cell : dfl::detail::split(text, ',')) {
        double v;
        if (!dfl::detail::parse_double(cell, v))
            throw dfl::ConfigError(name + ": expected comma-separated numbers, got '" + text + "'");
        out.push_back(v);
    }
    if (out.empty()) throw dfl::ConfigError(name + ": empty list");
    return out;
}

std::vector<int> parse_intlist(const std::string& name, const std::string& text) {
    std::vector<int> out;
    for (double v : parse_double_list(name, text)) {
        if (v < 1 || v != static_cast<int>(v))
            throw dfl::ConfigError(name + ": expected positive integers, got '" + text + "'");
        out.push_back(static_cast<int>(v));
    }
    return out;
}

int cmd_run(const std::string& config_path, const std::string& manifest_path,
            const dfl::KeyValueMap& overrides, const std::string& out_flag, int workers) {
    dfl::ExperimentConfig cfg;
    if (!manifest_path.empty()) {
        if (!config_path.empty() || !overrides.empty())
            throw dfl::ConfigError("--from-manifest cannot be combined with --config or key flags");
        cfg = dfl::config_from_manifest(manifest_path);
    } else {
        cfg = dfl::parse_config(config_path, overrides);
    }
    const fs::path dir = output_root(out_flag);
    auto paths = dfl::run_to_directory(cfg, dir, workers);
    std::cout << "run complete: " << paths.dir.string() << "\n"
              << "  " << paths.rounds_csv.filename().string() << ", "
              << paths.summary_json.filename().string() << ", "
              << paths.manifest_json.filename().string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const dfl::KeyValueMap& overrides,
              const std::string& out_flag, int workers, const std::string& lambda_grid,
              const std::string& nbest_grid, const std::string& clients_grid) {
    dfl::KeyValueMap base_overrides = overrides;
    // the axes drive these three keys per cell
    for (const char* key : {"lambda", "n_best", "clients"}) base_overrides.erase(key);
    dfl::ExperimentConfig base = dfl::parse_config(config_path, base_overrides);

    dfl::SweepAxes axes;
    if (!lambda_grid.empty()) axes.lambdas = parse_double_list("--lambda-grid", lambda_grid);
    if (!nbest_grid.empty()) axes.n_bests = parse_intlist("--nbest-grid", nbest_grid);
    if (!clients_grid.empty()) axes.client_counts = parse_intlist("--clients-grid", clients_grid);

    const fs::path root = output_root(out_flag);
    auto cells = dfl::run_sweep(base, axes, root, workers);
    std::cout << "sweep complete: " << cells.size() << " cells under " << root.string() << "\n";
    for (const auto& cell : cells) std::cout << "  " << cell.filename().string() << "\n";
    return 0;
}

int cmd_summarize(const std::string& input) {
    fs::path path = input;
    if (fs::is_directory(path)) path /= "rounds.csv";
    auto summary = dfl::summarize_records(dfl::read_rounds_csv(path));
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dflsim: loss-guided decentralized federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path, manifest_path, out_flag, input;
    std::string lambda_grid, nbest_grid, clients_grid;
    int workers = 1;

    auto* run = app.add_subcommand("run", "run one experiment and write rounds.csv, summary.json, manifest.json");
    run->add_option("--config", config_path, "key = value config file");
    run->add_option("--from-manifest", manifest_path, "re-run a finished run from its manifest");
    run->add_option("--out", out_flag, "output directory (default $DFL_OUT or ./out)");
    run->add_option("--workers", workers, "worker threads; never changes the results")
        ->check(CLI::PositiveNumber);
    KeyFlags run_keys;
    run_keys.attach(run);

    auto* sweep = app.add_subcommand("sweep", "run the lambda x n_best x clients grid, one directory per cell");
    sweep->add_option("--config", config_path, "key = value config file");
    sweep->add_option("--out", out_flag, "output root (default $DFL_OUT or ./out)");
    sweep->add_option("--workers", workers, "worker threads; never changes the results")
        ->check(CLI::PositiveNumber);
    sweep->add_option("--lambda-grid", lambda_grid, "lambda axis (default 0,0.25,0.5,0.75)");
    sweep->add_option("--nbest-grid", nbest_grid, "n_best axis (default 1,5)");
    sweep->add_option("--clients-grid", clients_grid, "client count axis (default 6,18)");
    KeyFlags sweep_keys;
    sweep_keys.attach(sweep);

    auto* summarize = app.add_subcommand("summarize", "recompute the summary table from a stored rounds.csv");
    summarize->add_option("input", input, "run directory or rounds.csv path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, manifest_path, run_keys.overrides(run), out_flag, workers);
        if (sweep->parsed())
            return cmd_sweep(config_path, sweep_keys.overrides(sweep), out_flag, workers,
                             lambda_grid, nbest_grid, clients_grid);
        if (summarize->parsed())
            return cmd_summarize(input);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
