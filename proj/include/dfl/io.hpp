#pragma once

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfl/config.hpp"
#include "dfl/engine.hpp"
#include "dfl/errors.hpp"
#include "dfl/metrics.hpp"

namespace dfl {

inline constexpr const char* kRoundsCsvHeader =
    "round,client,train_loss,val_loss,adjusted_loss,received_count,received_from,"
    "accuracy,precision,recall,f1";

namespace detail {

inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline std::string join_ids(const std::vector<int>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += '|';
        out += std::to_string(ids[i]);
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out)
        throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace detail

// One row per (round, client), rounds then clients ascending, reals with six
// decimals, received_from as '|'-joined sender ids.
inline void write_rounds_csv(const std::vector<RoundRecord>& records,
                             const std::filesystem::path& path) {
    if (records.empty())
        throw std::invalid_argument("write_rounds_csv: no records");
    std::vector<const RoundRecord*> order;
    order.reserve(records.size());
    for (const auto& r : records) order.push_back(&r);
    std::sort(order.begin(), order.end(),
              [](const RoundRecord* a, const RoundRecord* b) { return a->round < b->round; });

    std::string out{kRoundsCsvHeader};
    out += '\n';
    for (const RoundRecord* rec : order) {
        auto entries = rec->entries;
        std::sort(entries.begin(), entries.end(),
                  [](const ClientRoundEntry& a, const ClientRoundEntry& b) {
                      return a.client_id < b.client_id;
                  });
        for (const auto& e : entries) {
            out += std::to_string(rec->round);
            out += ',';
            out += std::to_string(e.client_id);
            out += ',';
            out += detail::fixed6(e.train_loss);
            out += ',';
            out += detail::fixed6(e.val_loss);
            out += ',';
            out += detail::fixed6(e.adjusted_loss);
            out += ',';
            out += std::to_string(e.received_count);
            out += ',';
            out += detail::join_ids(e.received_from);
            out += ',';
            out += detail::fixed6(e.accuracy);
            out += ',';
            out += detail::fixed6(e.precision);
            out += ',';
            out += detail::fixed6(e.recall);
            out += ',';
            out += detail::fixed6(e.f1);
            out += '\n';
        }
    }
    detail::write_text(path, out);
}

inline std::vector<RoundRecord> read_rounds_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("read_rounds_csv: cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || std::string(detail::trim(line)) != kRoundsCsvHeader)
        throw ParseError("read_rounds_csv: unexpected header in '" + path.string() + "'");

    std::map<int, RoundRecord> by_round;
    long long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split(std::string_view(line), ',');
        if (cells.size() != 11)
            throw ParseError("read_rounds_csv: line " + std::to_string(line_no) + ": expected 11 fields");
        auto geti = [&](std::size_t i) {
            long long v;
            if (!detail::parse_int(cells[i], v))
                throw ParseError("read_rounds_csv: line " + std::to_string(line_no) + ": bad integer");
            return v;
        };
        auto getd = [&](std::size_t i) {
            double v;
            if (!detail::parse_double(cells[i], v))
                throw ParseError("read_rounds_csv: line " + std::to_string(line_no) + ": bad number");
            return v;
        };
        ClientRoundEntry e;
        const int round = static_cast<int>(geti(0));
        e.client_id = static_cast<int>(geti(1));
        e.train_loss = getd(2);
        e.val_loss = getd(3);
        e.adjusted_loss = getd(4);
        e.received_count = static_cast<int>(geti(5));
        if (!detail::trim(cells[6]).empty())
            for (auto id : detail::split(cells[6], '|')) {
                long long v;
                if (!detail::parse_int(id, v))
                    throw ParseError("read_rounds_csv: line " + std::to_string(line_no) +
                                     ": bad received_from list");
                e.received_from.push_back(static_cast<int>(v));
            }
        e.accuracy = getd(7);
        e.precision = getd(8);
        e.recall = getd(9);
        e.f1 = getd(10);
        auto& rec = by_round[round];
        rec.round = round;
        rec.entries.push_back(std::move(e));
    }
    std::vector<RoundRecord> records;
    records.reserve(by_round.size());
    for (auto& [round, rec] : by_round) {
        std::sort(rec.entries.begin(), rec.entries.end(),
                  [](const ClientRoundEntry& a, const ClientRoundEntry& b) {
                      return a.client_id < b.client_id;
                  });
        records.push_back(std::move(rec));
    }
    if (records.empty())
        throw ParseError("read_rounds_csv: '" + path.string() + "' has no data rows");
    return records;
}

// Final-round mean and sample std of every column, grouped across clients.
inline nlohmann::json summarize_records(const std::vector<RoundRecord>& records) {
    if (records.empty())
        throw std::invalid_argument("summarize_records: no records");
    const RoundRecord* last = &records.front();
    for (const auto& r : records)
        if (r.round > last->round) last = &r;

    auto column = [&](auto getter) {
        std::vector<double> v;
        v.reserve(last->entries.size());
        for (const auto& e : last->entries) v.push_back(getter(e));
        return summarize(v);
    };
    auto entry = [](MeanStd m) {
        return nlohmann::json{{"mean", m.mean}, {"std", m.stddev}};
    };

    nlohmann::json j;
    j["grouping"] = "clients";
    j["round"] = last->round;
    j["client_count"] = last->entries.size();
    j["metrics"] = {
        {"train_loss", entry(column([](const ClientRoundEntry& e) { return e.train_loss; }))},
        {"val_loss", entry(column([](const ClientRoundEntry& e) { return e.val_loss; }))},
        {"adjusted_loss", entry(column([](const ClientRoundEntry& e) { return e.adjusted_loss; }))},
        {"accuracy", entry(column([](const ClientRoundEntry& e) { return e.accuracy; }))},
        {"precision", entry(column([](const ClientRoundEntry& e) { return e.precision; }))},
        {"recall", entry(column([](const ClientRoundEntry& e) { return e.recall; }))},
        {"f1", entry(column([](const ClientRoundEntry& e) { return e.f1; }))},
    };
    return j;
}

inline constexpr const char* kArtifactName = "dflsim";
inline constexpr const char* kArtifactVersion = "0.1.0";

inline std::string iso8601_now() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// The manifest is fully resolved: rebuilding the config from it reproduces
// the run byte for byte.
inline nlohmann::json make_manifest(const ExperimentConfig& resolved) {
    nlohmann::json j;
    j["artifact"] = kArtifactName;
    j["version"] = kArtifactVersion;
    j["created"] = iso8601_now();
    j["outputs"] = {{"rounds_csv", "rounds.csv"}, {"summary_json", "summary.json"}};
    j["config"] = to_json(resolved);
    return j;
}

inline ExperimentConfig config_from_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open manifest '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest '" + path.string() + "': " + e.what());
    }
    return config_from_json(j.at("config"));
}

struct RunArtifacts {
    std::filesystem::path dir;
    std::filesystem::path rounds_csv;
    std::filesystem::path summary_json;
    std::filesystem::path manifest_json;
};

// Runs one experiment into a directory: rounds.csv, summary.json (recomputed
// from the written CSV so `summarize` reproduces it exactly) and, last of
// all, manifest.json as the completion marker.
inline RunArtifacts run_to_directory(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                                     int workers = 1) {
    std::filesystem::create_directories(dir);
    RunArtifacts paths{dir, dir / "rounds.csv", dir / "summary.json", dir / "manifest.json"};

    auto result = run_experiment(cfg, RunOptions{workers, false});
    write_rounds_csv(result.records, paths.rounds_csv);
    auto summary = summarize_records(read_rounds_csv(paths.rounds_csv));
    detail::write_text(paths.summary_json, summary.dump(2) + "\n");
    detail::write_text(paths.manifest_json, make_manifest(result.config).dump(2) + "\n");
    return paths;
}

struct SweepAxes {
    std::vector<double> lambdas{0.0, 0.25, 0.5, 0.75};
    std::vector<int> n_bests{1, 5};
    std::vector<int> client_counts{6, 18};
};

inline std::string sweep_cell_name(double lambda, int n_best, int clients) {
    char lam[32];
    std::snprintf(lam, sizeof lam, "%g", lambda);
    return "lambda" + std::string(lam) + "_nbest" + std::to_string(n_best) + "_clients" +
           std::to_string(clients);
}

// Runs the full grid under root, one directory per cell. Cells whose
// manifest already exists are skipped, so an interrupted sweep resumes.
inline std::vector<std::filesystem::path> run_sweep(const ExperimentConfig& base,
                                                    const SweepAxes& axes,
                                                    const std::filesystem::path& root,
                                                    int workers = 1) {
    if (axes.lambdas.empty() || axes.n_bests.empty() || axes.client_counts.empty())
        throw std::invalid_argument("run_sweep: every axis needs at least one value");
    const int dataset_count = static_cast<int>(base.datasets.size());
    std::vector<std::filesystem::path> cells;
    for (double lambda : axes.lambdas) {
        for (int n_best : axes.n_bests) {
            for (int clients : axes.client_counts) {
                if (clients % dataset_count != 0)
                    throw ConfigError("clients: sweep value " + std::to_string(clients) +
                                      " is not a multiple of the dataset count " +
                                      std::to_string(dataset_count));
                ExperimentConfig cell = base;
                cell.lambda = lambda;
                cell.train.lambda = lambda;
                cell.n_best = n_best;
                cell.clients_per_dataset = clients / dataset_count;
                const auto dir = root / sweep_cell_name(lambda, n_best, clients);
                cells.push_back(dir);
                if (std::filesystem::exists(dir / "manifest.json")) continue;
                run_to_directory(cell, dir, workers);
            }
        }
    }
    return cells;
}

}  // namespace dfl
