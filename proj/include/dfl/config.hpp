#pragma once

#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dfl/engine.hpp"
#include "dfl/errors.hpp"

namespace dfl {

using KeyValueMap = std::map<std::string, std::string>;

// Stock synthetic benchmark: three 4-class datasets with these imbalanced
// per-class histograms (4062 / 3171 / 3852 rows).
inline const std::vector<std::vector<int>>& default_class_counts() {
    static const std::vector<std::vector<int>> counts = {
        {1180, 1383, 1076, 423},
        {630, 621, 275, 1645},
        {513, 1192, 1162, 985},
    };
    return counts;
}

// Flat `key = value` file; '#' starts a comment, blank lines are skipped.
inline KeyValueMap load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    KeyValueMap kv;
    std::string line;
    long long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string_view sv = detail::trim(line);
        if (sv.empty()) continue;
        auto eq = sv.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key{detail::trim(sv.substr(0, eq))};
        std::string value{detail::trim(sv.substr(eq + 1))};
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

namespace detail {

inline const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "clients", "rounds", "epochs", "batch_size", "learning_rate", "lambda", "n_best",
        "loss_source", "model", "hidden_dims", "seed", "train_fraction", "sharing", "data",
        "synth_dim", "synth_spread", "synth_counts", "synth_shared_means",
    };
    return keys;
}

inline long long config_int(const KeyValueMap& kv, const std::string& key, long long fallback,
                            long long lo, long long hi) {
    auto it = kv.find(key);
    long long v = fallback;
    if (it != kv.end() && !parse_int(it->second, v))
        throw ConfigError(key + ": not an integer: '" + it->second + "'");
    if (v < lo || v > hi)
        throw ConfigError(key + ": value " + std::to_string(v) + " out of range [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
}

inline double config_double(const KeyValueMap& kv, const std::string& key, double fallback,
                            double lo, double hi, bool lo_open = false) {
    auto it = kv.find(key);
    double v = fallback;
    if (it != kv.end() && !parse_double(it->second, v))
        throw ConfigError(key + ": not a number: '" + it->second + "'");
    if (v < lo || v > hi || (lo_open && v == lo)) {
        std::ostringstream os;
        os << key << ": value " << v << " out of range";
        throw ConfigError(os.str());
    }
    return v;
}

inline bool config_bool(const KeyValueMap& kv, const std::string& key, bool fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const std::string& v = it->second;
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError(key + ": expected on/off, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, std::string_view text) {
    std::vector<int> out;
    for (auto cell : split(text, ',')) {
        long long v;
        if (!parse_int(cell, v) || v < 1)
            throw ConfigError(key + ": expected positive integers, got '" + std::string(text) + "'");
        out.push_back(static_cast<int>(v));
    }
    return out;
}

}  // namespace detail

// Builds a full ExperimentConfig from merged key=value settings (file keys
// overlaid by flag values). Unspecified keys take the stock defaults:
// clients=6, epochs=1, batch_size=16, rounds=50, learning_rate=0.01,
// lambda=0.25, n_best=1, loss_source=val, model=softmax, synthetic data.
inline ExperimentConfig parse_config(const KeyValueMap& kv) {
    for (const auto& [key, value] : kv)
        if (!detail::known_config_keys().count(key))
            throw ConfigError("unknown config key '" + key + "'");

    ExperimentConfig cfg;
    cfg.master_seed = static_cast<std::uint64_t>(
        detail::config_int(kv, "seed", 1, 0, std::numeric_limits<long long>::max()));
    cfg.rounds = static_cast<int>(detail::config_int(kv, "rounds", 50, 1, 1000000));
    cfg.n_best = static_cast<int>(detail::config_int(kv, "n_best", 1, 1, 1000000));
    cfg.lambda = detail::config_double(kv, "lambda", 0.25, 0.0, 1.0);
    cfg.train_fraction = detail::config_double(kv, "train_fraction", 0.8, 0.0, 1.0, true);
    if (cfg.train_fraction >= 1.0)
        throw ConfigError("train_fraction: must lie strictly inside (0,1)");
    cfg.sharing_enabled = detail::config_bool(kv, "sharing", true);

    cfg.train.local_epochs = static_cast<int>(detail::config_int(kv, "epochs", 1, 1, 1000000));
    cfg.train.batch_size = static_cast<int>(detail::config_int(kv, "batch_size", 16, 1, 1000000));
    cfg.train.learning_rate = detail::config_double(kv, "learning_rate", 0.01, 0.0, 1e6, true);
    cfg.train.lambda = cfg.lambda;

    if (auto it = kv.find("loss_source"); it != kv.end()) {
        if (it->second == "val") cfg.loss_source = LossSource::val;
        else if (it->second == "train") cfg.loss_source = LossSource::train;
        else throw ConfigError("loss_source: expected val or train, got '" + it->second + "'");
    }

    if (auto it = kv.find("model"); it != kv.end()) {
        if (it->second == "softmax") cfg.model.architecture = Architecture::softmax;
        else if (it->second == "mlp") cfg.model.architecture = Architecture::mlp;
        else throw ConfigError("model: expected softmax or mlp, got '" + it->second + "'");
    }
    if (cfg.model.architecture == Architecture::mlp) {
        cfg.model.hidden_dims = {16};
        if (auto it = kv.find("hidden_dims"); it != kv.end())
            cfg.model.hidden_dims = detail::parse_int_list("hidden_dims", it->second);
    } else if (kv.count("hidden_dims")) {
        throw ConfigError("hidden_dims: only valid with model = mlp");
    }

    // datasets
    const std::string data = kv.count("data") ? kv.at("data") : "synthetic";
    if (data == "synthetic") {
        const int dim = static_cast<int>(detail::config_int(kv, "synth_dim", 8, 2, 4096));
        const double spread = detail::config_double(kv, "synth_spread", 1.0, 0.0, 1e6, true);
        std::vector<std::vector<int>> counts = default_class_counts();
        if (auto it = kv.find("synth_counts"); it != kv.end()) {
            counts.clear();
            for (auto group : detail::split(it->second, ';'))
                counts.push_back(detail::parse_int_list("synth_counts", group));
        }
        const bool shared_means = detail::config_bool(kv, "synth_shared_means", false);
        for (std::size_t di = 0; di < counts.size(); ++di) {
            SyntheticSpec s;
            s.name = "synth" + std::to_string(di);
            s.seed = rng::derive(cfg.master_seed, rng::Stream::dataset_seed, di);
            s.class_count = static_cast<int>(counts[di].size());
            s.dim = dim;
            s.per_class_counts = counts[di];
            s.spread = spread;
            if (shared_means)
                s.means_seed = rng::derive(cfg.master_seed, rng::Stream::class_means);
            cfg.datasets.emplace_back(std::move(s));
        }
    } else {
        for (auto path : detail::split(data, ',')) {
            CsvSpec c;
            c.path = std::string(detail::trim(path));
            if (c.path.empty()) throw ConfigError("data: empty csv path");
            c.name = c.path;
            cfg.datasets.emplace_back(std::move(c));
        }
        for (const char* key : {"synth_dim", "synth_spread", "synth_counts", "synth_shared_means"})
            if (kv.count(key))
                throw ConfigError(std::string(key) + ": only valid with data = synthetic");
    }

    const int clients = static_cast<int>(detail::config_int(kv, "clients", 6, 2, 1000000));
    const int dataset_count = static_cast<int>(cfg.datasets.size());
    if (clients % dataset_count != 0)
        throw ConfigError("clients: " + std::to_string(clients) + " is not a multiple of the dataset count " +
                          std::to_string(dataset_count));
    cfg.clients_per_dataset = clients / dataset_count;
    if (cfg.n_best > clients)
        throw ConfigError("n_best: exceeds client count " + std::to_string(clients));

    cfg.validate();
    return cfg;
}

// Convenience: read the optional file, overlay flag values, parse.
inline ExperimentConfig parse_config(const std::string& config_path, const KeyValueMap& flag_overrides) {
    KeyValueMap kv;
    if (!config_path.empty()) kv = load_config_file(config_path);
    for (const auto& [key, value] : flag_overrides) kv[key] = value;
    return parse_config(kv);
}

// --- JSON form, used by the run manifest ---

inline nlohmann::json to_json(const DatasetSpec& spec) {
    nlohmann::json j;
    if (const auto* s = std::get_if<SyntheticSpec>(&spec)) {
        j["type"] = "synthetic";
        j["name"] = s->name;
        j["seed"] = s->seed;
        j["class_count"] = s->class_count;
        j["dim"] = s->dim;
        j["per_class_counts"] = s->per_class_counts;
        j["spread"] = s->spread;
        j["means_seed"] = s->means_seed ? nlohmann::json(*s->means_seed) : nlohmann::json(nullptr);
    } else {
        const auto& c = std::get<CsvSpec>(spec);
        j["type"] = "csv";
        j["name"] = c.name;
        j["path"] = c.path;
    }
    return j;
}

inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "synthetic") {
        SyntheticSpec s;
        s.name = j.at("name").get<std::string>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.class_count = j.at("class_count").get<int>();
        s.dim = j.at("dim").get<int>();
        s.per_class_counts = j.at("per_class_counts").get<std::vector<int>>();
        s.spread = j.at("spread").get<double>();
        if (!j.at("means_seed").is_null()) s.means_seed = j.at("means_seed").get<std::uint64_t>();
        return s;
    }
    if (type == "csv") {
        CsvSpec c;
        c.name = j.at("name").get<std::string>();
        c.path = j.at("path").get<std::string>();
        return c;
    }
    throw ConfigError("dataset spec: unknown type '" + type + "'");
}

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["datasets"] = nlohmann::json::array();
    for (const auto& spec : cfg.datasets) j["datasets"].push_back(to_json(spec));
    j["clients_per_dataset"] = cfg.clients_per_dataset;
    j["train_fraction"] = cfg.train_fraction;
    j["rounds"] = cfg.rounds;
    j["n_best"] = cfg.n_best;
    j["lambda"] = cfg.lambda;
    j["loss_source"] = cfg.loss_source == LossSource::val ? "val" : "train";
    j["sharing"] = cfg.sharing_enabled;
    j["train"] = {{"epochs", cfg.train.local_epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate}};
    j["model"] = {{"architecture", cfg.model.architecture == Architecture::softmax ? "softmax" : "mlp"},
                  {"input_dim", cfg.model.input_dim},
                  {"class_count", cfg.model.class_count},
                  {"hidden_dims", cfg.model.hidden_dims}};
    j["master_seed"] = cfg.master_seed;
    return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    cfg.datasets.clear();
    for (const auto& spec : j.at("datasets")) cfg.datasets.push_back(dataset_spec_from_json(spec));
    cfg.clients_per_dataset = j.at("clients_per_dataset").get<int>();
    cfg.train_fraction = j.at("train_fraction").get<double>();
    cfg.rounds = j.at("rounds").get<int>();
    cfg.n_best = j.at("n_best").get<int>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.loss_source = j.at("loss_source").get<std::string>() == "train" ? LossSource::train : LossSource::val;
    cfg.sharing_enabled = j.at("sharing").get<bool>();
    cfg.train.local_epochs = j.at("train").at("epochs").get<int>();
    cfg.train.batch_size = j.at("train").at("batch_size").get<int>();
    cfg.train.learning_rate = j.at("train").at("learning_rate").get<double>();
    cfg.train.lambda = cfg.lambda;
    cfg.model.architecture =
        j.at("model").at("architecture").get<std::string>() == "mlp" ? Architecture::mlp : Architecture::softmax;
    cfg.model.input_dim = j.at("model").at("input_dim").get<int>();
    cfg.model.class_count = j.at("model").at("class_count").get<int>();
    cfg.model.hidden_dims = j.at("model").at("hidden_dims").get<std::vector<int>>();
    cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

}  // namespace dfl
