#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dfl/errors.hpp"
#include "dfl/model.hpp"

namespace dfl {

enum class LossSource { val, train };

// One client's losses for the current round, as circulated to the peers.
struct ClientLosses {
    double val = 0.0;
    double train = 0.0;
};

// A model delivery: who sends, and the sender's losses this round.
struct Delivery {
    int sender_id = 0;
    double sender_val_loss = 0.0;
    double sender_train_loss = 0.0;
};

// Who sends to whom this round. best_ids is sorted ascending by
// (val_loss, client_id); every delivery to k comes from a best client whose
// validation loss is strictly below k's.
struct RoundPlan {
    std::vector<int> best_ids;
    std::map<int, std::vector<Delivery>> deliveries;
};

// Ids of the n smallest validation losses, ties broken by smaller client id.
// n >= C returns every id in (loss, id) order.
inline std::vector<int> select_best(const std::map<int, double>& loss_table, int n) {
    if (loss_table.empty())
        throw std::invalid_argument("select_best: empty loss table");
    if (n < 1)
        throw std::invalid_argument("select_best: n must be >= 1");
    std::vector<std::pair<double, int>> order;
    order.reserve(loss_table.size());
    for (const auto& [id, loss] : loss_table) order.emplace_back(loss, id);
    std::sort(order.begin(), order.end());
    if (static_cast<int>(order.size()) > n) order.resize(static_cast<std::size_t>(n));
    std::vector<int> ids;
    ids.reserve(order.size());
    for (const auto& [loss, id] : order) ids.push_back(id);
    return ids;
}

// The n globally best clients deliver to every client whose validation loss
// is strictly greater than theirs. Best clients can still receive from
// strictly better best clients; equal losses never trigger a delivery.
inline RoundPlan plan_sharing(const std::map<int, ClientLosses>& loss_table, int n_best) {
    if (loss_table.size() < 2)
        throw std::invalid_argument("plan_sharing: need at least two clients");
    std::map<int, double> val;
    for (const auto& [id, losses] : loss_table) val[id] = losses.val;

    RoundPlan plan;
    plan.best_ids = select_best(val, n_best);
    for (const auto& [k, losses] : loss_table) {
        auto& list = plan.deliveries[k];
        for (int m : plan.best_ids) {
            const auto& sender = loss_table.at(m);
            if (m != k && sender.val < losses.val)
                list.push_back({m, sender.val, sender.train});
        }
    }
    return plan;
}

struct ReceivedModel {
    int sender_id = 0;
    ParameterVector params;
};

// Unweighted coordinate-wise mean of own plus received models. Received
// models are summed in ascending sender order, so the result does not depend
// on the input permutation; an empty list returns own unchanged, and
// averaging with copies of own reproduces own exactly.
inline ParameterVector aggregate(const ParameterVector& own, std::vector<ReceivedModel> received) {
    for (const auto& r : received)
        if (!own.compatible_with(r.params))
            throw IncompatibleModelError("aggregate: shape tag mismatch with model from client " +
                                         std::to_string(r.sender_id));
    if (received.empty()) return own;

    std::sort(received.begin(), received.end(),
              [](const ReceivedModel& a, const ReceivedModel& b) { return a.sender_id < b.sender_id; });

    std::vector<double> delta(own.values.size(), 0.0);
    for (const auto& r : received)
        for (std::size_t i = 0; i < delta.size(); ++i)
            delta[i] += r.params.values[i] - own.values[i];

    ParameterVector out = own;
    const double scale = 1.0 / static_cast<double>(received.size() + 1);
    for (std::size_t i = 0; i < delta.size(); ++i)
        out.values[i] = own.values[i] + delta[i] * scale;
    return out;
}

// Mean sender loss of the round's deliveries; zero when nothing arrived.
inline double correction_term(const std::vector<Delivery>& deliveries, LossSource source) {
    if (deliveries.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& d : deliveries)
        sum += source == LossSource::val ? d.sender_val_loss : d.sender_train_loss;
    return sum / static_cast<double>(deliveries.size());
}

// Per-client protocol state carried between rounds.
struct ClientState {
    int client_id = 0;
    ParameterVector params;
    double last_train_loss = 0.0;
    double last_val_loss = 0.0;
    double last_adjusted_loss = 0.0;
    double pending_correction = 0.0;  // mean loss of last round's received best models
};

}  // namespace dfl
