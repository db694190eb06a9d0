#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "dfl/dataset.hpp"
#include "dfl/metrics.hpp"
#include "dfl/model.hpp"
#include "dfl/protocol.hpp"
#include "dfl/rng.hpp"

namespace dfl {

struct SyntheticSpec {
    std::string name = "synthetic";
    std::uint64_t seed = 0;
    int class_count = 4;
    int dim = 8;
    std::vector<int> per_class_counts;
    double spread = 1.0;
    std::optional<std::uint64_t> means_seed;  // share across specs to share class geometry
};

struct CsvSpec {
    std::string name;
    std::string path;
};

using DatasetSpec = std::variant<SyntheticSpec, CsvSpec>;

struct ExperimentConfig {
    std::vector<DatasetSpec> datasets;
    int clients_per_dataset = 2;
    double train_fraction = 0.8;
    int rounds = 50;
    int n_best = 1;
    double lambda = 0.25;
    LossSource loss_source = LossSource::val;
    bool sharing_enabled = true;
    TrainSettings train;   // lambda and seed are overwritten per client/round by the engine
    ModelConfig model;     // input_dim / class_count of 0 are resolved from the data
    std::uint64_t master_seed = 1;

    int client_count() const {
        return static_cast<int>(datasets.size()) * clients_per_dataset;
    }

    void validate() const {
        if (datasets.empty()) throw std::invalid_argument("experiment: need at least one dataset");
        if (clients_per_dataset < 1)
            throw std::invalid_argument("experiment: clients_per_dataset must be >= 1");
        if (client_count() < 2) throw std::invalid_argument("experiment: need at least two clients");
        if (rounds < 1) throw std::invalid_argument("experiment: rounds must be >= 1");
        if (n_best < 1 || n_best > client_count())
            throw std::invalid_argument("experiment: n_best must lie in [1, client_count]");
        if (!(lambda >= 0.0 && lambda <= 1.0))
            throw std::invalid_argument("experiment: lambda must lie in [0,1]");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw std::invalid_argument("experiment: train_fraction must lie in (0,1)");
        TrainSettings t = train;
        t.lambda = lambda;
        t.validate();
    }
};

struct ClientRoundEntry {
    int client_id = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double adjusted_loss = 0.0;
    int received_count = 0;
    std::vector<int> received_from;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct RoundRecord {
    int round = 0;
    std::vector<ClientRoundEntry> entries;  // exactly one per client, ascending id
};

struct RunOptions {
    int workers = 1;
    bool capture_params = false;  // keep per-round post-aggregation parameters
};

struct ExperimentResult {
    ExperimentConfig config;  // fully resolved (model dims filled in)
    ParameterVector initial_params;
    std::vector<RoundRecord> records;
    std::vector<ClientState> final_states;
    std::vector<std::vector<ParameterVector>> param_history;  // [round][client], if captured
};

namespace detail {

// Runs body(0..n-1) on up to `workers` threads. Tasks write only their own
// slots, so the outcome is identical for every worker count.
template <typename F>
inline void parallel_for(int n, int workers, F&& body) {
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::atomic<int> next{0};
    auto run = [&] {
        int i;
        while ((i = next.fetch_add(1)) < n) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const int w = std::max(1, std::min(workers, n));
    if (w == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(w));
        for (int t = 0; t < w; ++t) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
}

[[noreturn]] inline void rethrow_with_context(int round, int client) {
    const std::string ctx = "round " + std::to_string(round) + ", client " + std::to_string(client) + ": ";
    try {
        throw;
    } catch (const NumericError& e) {
        throw NumericError(ctx + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(ctx + e.what());
    }
}

}  // namespace detail

inline std::vector<Dataset> build_datasets(const ExperimentConfig& cfg) {
    std::vector<Dataset> out;
    out.reserve(cfg.datasets.size());
    for (const auto& spec : cfg.datasets) {
        if (const auto* s = std::get_if<SyntheticSpec>(&spec)) {
            Dataset ds = generate_synthetic(s->seed, s->class_count, s->dim, s->per_class_counts,
                                            s->spread, s->means_seed);
            if (!s->name.empty()) ds.name = s->name;
            out.push_back(std::move(ds));
        } else {
            const auto& c = std::get<CsvSpec>(spec);
            Dataset ds = load_csv(c.path);
            if (!c.name.empty()) ds.name = c.name;
            out.push_back(std::move(ds));
        }
    }
    return out;
}

// Fills model input_dim / class_count from the data when left at 0 and checks
// that every dataset agrees; the shared initial model requires one shape.
inline void resolve_model(ExperimentConfig& cfg, const std::vector<Dataset>& datasets) {
    const int dim = static_cast<int>(datasets.front().feature_dim);
    const int k = datasets.front().class_count;
    for (const auto& ds : datasets) {
        if (static_cast<int>(ds.feature_dim) != dim || ds.class_count != k)
            throw std::invalid_argument("experiment: datasets disagree on feature_dim or class_count");
    }
    if (cfg.model.input_dim == 0) cfg.model.input_dim = dim;
    if (cfg.model.class_count == 0) cfg.model.class_count = k;
    if (cfg.model.input_dim != dim)
        throw std::invalid_argument("experiment: model input_dim does not match the data");
    if (cfg.model.class_count != k)
        throw std::invalid_argument("experiment: model class_count does not match the data");
    cfg.model.validate();
}

inline std::vector<ClientShard> build_shards(const ExperimentConfig& cfg) {
    return partition_clients(build_datasets(cfg), cfg.clients_per_dataset, cfg.train_fraction,
                             rng::derive(cfg.master_seed, rng::Stream::partition));
}

// One communication round, in order: (a) local epochs from each client's
// aggregated model of the previous round with the carried-over correction,
// (b) validation loss of the freshly trained local model, (c) sharing plan
// over the loss table, (d) per-client aggregation of the received local
// models, (e) next correction and the recorded adjusted loss, (f) metrics of
// the aggregated model on the client's test shard.
inline std::pair<std::vector<ClientState>, RoundRecord> run_round(
    const std::vector<ClientState>& states, const std::vector<ClientShard>& shards,
    const ExperimentConfig& cfg, int round, int workers = 1) {
    const int client_count = static_cast<int>(states.size());
    if (client_count < 2 || shards.size() != states.size())
        throw std::invalid_argument("run_round: states and shards must align, with >= 2 clients");
    if (round < 1)
        throw std::invalid_argument("run_round: round index starts at 1");
    for (int k = 0; k < client_count; ++k)
        if (states[k].client_id != k || shards[k].client_id != k)
            throw std::invalid_argument("run_round: client ids must be 0..C-1 in order");

    std::vector<ParameterVector> local(client_count);  // pre-aggregation models of this round
    std::vector<double> train_loss(client_count), val_loss(client_count);

    detail::parallel_for(client_count, workers, [&](int k) {
        try {
            TrainSettings s = cfg.train;
            s.lambda = cfg.lambda;
            s.seed = rng::derive(cfg.master_seed, rng::Stream::train, static_cast<std::uint64_t>(k),
                                 static_cast<std::uint64_t>(round));
            auto res = sgd_epochs(states[k].params, cfg.model, shards[k].train, s,
                                  states[k].pending_correction);
            local[k] = std::move(res.params);
            train_loss[k] = res.mean_train_loss;
            val_loss[k] = evaluate_loss(local[k], cfg.model, shards[k].test);
            if (!std::isfinite(val_loss[k]))
                throw NumericError("non-finite validation loss");
        } catch (...) {
            detail::rethrow_with_context(round, k);
        }
    });

    RoundPlan plan;
    if (cfg.sharing_enabled) {
        std::map<int, ClientLosses> table;
        for (int k = 0; k < client_count; ++k) table[k] = {val_loss[k], train_loss[k]};
        plan = plan_sharing(table, cfg.n_best);
    }
    static const std::vector<Delivery> kNoDeliveries;
    auto deliveries_for = [&](int k) -> const std::vector<Delivery>& {
        auto it = plan.deliveries.find(k);
        return it == plan.deliveries.end() ? kNoDeliveries : it->second;
    };

    std::vector<ClientState> next(client_count);
    std::vector<Scores> round_scores(client_count);

    detail::parallel_for(client_count, workers, [&](int k) {
        try {
            const auto& incoming = deliveries_for(k);
            std::vector<ReceivedModel> received;
            received.reserve(incoming.size());
            for (const auto& d : incoming) received.push_back({d.sender_id, local[d.sender_id]});

            ClientState st;
            st.client_id = k;
            st.params = aggregate(local[k], std::move(received));
            st.last_train_loss = train_loss[k];
            st.last_val_loss = val_loss[k];
            st.pending_correction = correction_term(incoming, cfg.loss_source);
            st.last_adjusted_loss = adjusted_loss(train_loss[k], st.pending_correction, cfg.lambda);
            round_scores[k] = scores(confusion(st.params, cfg.model, shards[k].test));
            next[k] = std::move(st);
        } catch (...) {
            detail::rethrow_with_context(round, k);
        }
    });

    RoundRecord record;
    record.round = round;
    record.entries.reserve(static_cast<std::size_t>(client_count));
    for (int k = 0; k < client_count; ++k) {
        ClientRoundEntry e;
        e.client_id = k;
        e.train_loss = train_loss[k];
        e.val_loss = val_loss[k];
        e.adjusted_loss = next[k].last_adjusted_loss;
        for (const auto& d : deliveries_for(k)) e.received_from.push_back(d.sender_id);
        e.received_count = static_cast<int>(e.received_from.size());
        e.accuracy = round_scores[k].accuracy;
        e.precision = round_scores[k].precision;
        e.recall = round_scores[k].recall;
        e.f1 = round_scores[k].f1;
        record.entries.push_back(std::move(e));
    }
    return {std::move(next), std::move(record)};
}

// Full experiment: build shards, give every client the same initial model,
// run the configured number of rounds. No correction is carried into round 1.
inline ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
    ExperimentResult result;
    result.config = config;
    result.config.validate();

    auto datasets = build_datasets(result.config);
    resolve_model(result.config, datasets);
    auto shards = partition_clients(datasets, result.config.clients_per_dataset,
                                    result.config.train_fraction,
                                    rng::derive(result.config.master_seed, rng::Stream::partition));

    result.initial_params = init_model(result.config.model, result.config.master_seed);
    const int client_count = result.config.client_count();
    std::vector<ClientState> states(static_cast<std::size_t>(client_count));
    for (int k = 0; k < client_count; ++k) {
        states[k].client_id = k;
        states[k].params = result.initial_params;
    }

    result.records.reserve(static_cast<std::size_t>(result.config.rounds));
    for (int t = 1; t <= result.config.rounds; ++t) {
        auto [next, record] = run_round(states, shards, result.config, t, options.workers);
        states = std::move(next);
        result.records.push_back(std::move(record));
        if (options.capture_params) {
            std::vector<ParameterVector> snapshot;
            snapshot.reserve(states.size());
            for (const auto& st : states) snapshot.push_back(st.params);
            result.param_history.push_back(std::move(snapshot));
        }
    }
    result.final_states = std::move(states);
    return result;
}

}  // namespace dfl
