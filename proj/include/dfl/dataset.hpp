#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfl/errors.hpp"
#include "dfl/rng.hpp"

namespace dfl {

// Row-major feature matrix with one integer class label per row.
struct Dataset {
    std::vector<double> features;  // rows() x feature_dim
    std::size_t feature_dim = 0;
    std::vector<int> labels;       // values in [0, class_count)
    int class_count = 0;
    std::string name;

    std::size_t rows() const { return labels.size(); }

    const double* row(std::size_t i) const { return features.data() + i * feature_dim; }

    void append_row(const double* x, int label) {
        features.insert(features.end(), x, x + feature_dim);
        labels.push_back(label);
    }

    void validate() const {
        if (class_count < 2)
            throw std::invalid_argument("dataset '" + name + "': class_count must be >= 2");
        if (feature_dim < 1)
            throw std::invalid_argument("dataset '" + name + "': feature_dim must be >= 1");
        if (rows() == 0)
            throw std::invalid_argument("dataset '" + name + "': no rows");
        if (features.size() != rows() * feature_dim)
            throw std::invalid_argument("dataset '" + name + "': feature matrix size mismatch");
        for (int y : labels)
            if (y < 0 || y >= class_count)
                throw std::invalid_argument("dataset '" + name + "': label out of range");
    }
};

// One client's private train subset plus the test subset it shares with the
// other clients of the same source dataset.
struct ClientShard {
    int client_id = 0;
    std::string source_dataset;
    Dataset train;
    Dataset test;
};

// Gaussian clusters, one per class. The mean layout depends only on
// means_seed (defaults to seed), the per-sample noise only on seed, so two
// datasets can share class geometry while drawing disjoint samples.
inline Dataset generate_synthetic(std::uint64_t seed, int class_count, int dim,
                                  const std::vector<int>& per_class_counts, double spread,
                                  std::optional<std::uint64_t> means_seed = std::nullopt) {
    if (class_count < 2)
        throw std::invalid_argument("generate_synthetic: class_count must be >= 2");
    if (dim < 2)
        throw std::invalid_argument("generate_synthetic: dim must be >= 2");
    if (!(spread > 0.0))
        throw std::invalid_argument("generate_synthetic: spread must be positive");
    if (static_cast<int>(per_class_counts.size()) != class_count)
        throw std::invalid_argument("generate_synthetic: per_class_counts length must equal class_count");
    for (int c = 0; c < class_count; ++c)
        if (per_class_counts[c] <= 0)
            throw std::invalid_argument("generate_synthetic: count for class " + std::to_string(c) +
                                        " must be positive");

    auto means_rng = rng::engine(rng::derive(means_seed.value_or(seed), rng::Stream::class_means));
    std::vector<double> means(static_cast<std::size_t>(class_count) * dim);
    for (auto& m : means) m = rng::uniform(means_rng, -4.0, 4.0);

    Dataset ds;
    ds.feature_dim = static_cast<std::size_t>(dim);
    ds.class_count = class_count;
    ds.name = "synthetic-" + std::to_string(seed);
    std::vector<double> x(dim);
    for (int c = 0; c < class_count; ++c) {
        auto g = rng::engine(rng::derive(seed, rng::Stream::class_noise, static_cast<std::uint64_t>(c)));
        for (int i = 0; i < per_class_counts[c]; ++i) {
            for (int j = 0; j < dim; ++j) x[j] = means[static_cast<std::size_t>(c) * dim + j] + spread * rng::normal(g);
            ds.append_row(x.data(), c);
        }
    }
    return ds;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline bool parse_int(std::string_view s, long long& out) {
    s = trim(s);
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace detail

// Rows of d real features followed by one integer label. A header row is
// detected by any non-numeric cell in the first line and skipped; error
// messages count data rows from 0 after the header.
inline Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("load_csv: cannot open '" + path + "'");

    Dataset ds;
    ds.name = path;
    std::string line;
    long long data_line = -1;
    bool first_line = true;
    int max_label = -1;
    std::vector<double> row;

    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split(line, ',');
        if (first_line) {
            first_line = false;
            bool numeric = true;
            double tmp;
            for (auto cell : cells)
                if (!detail::parse_double(cell, tmp)) { numeric = false; break; }
            if (!numeric) continue;  // header
        }
        ++data_line;
        if (ds.feature_dim == 0) {
            if (cells.size() < 2)
                throw ParseError("load_csv: line " + std::to_string(data_line) +
                                 ": need at least one feature and a label");
            ds.feature_dim = cells.size() - 1;
        }
        if (cells.size() != ds.feature_dim + 1)
            throw ParseError("load_csv: ragged row at line " + std::to_string(data_line));
        row.clear();
        for (std::size_t j = 0; j < ds.feature_dim; ++j) {
            double v;
            if (!detail::parse_double(cells[j], v))
                throw ParseError("load_csv: non-numeric feature at line " + std::to_string(data_line) +
                                 ", column " + std::to_string(j));
            row.push_back(v);
        }
        long long label;
        if (!detail::parse_int(cells.back(), label))
            throw ParseError("load_csv: non-integer label at line " + std::to_string(data_line));
        if (label < 0)
            throw ParseError("load_csv: negative label at line " + std::to_string(data_line));
        ds.append_row(row.data(), static_cast<int>(label));
        max_label = std::max(max_label, static_cast<int>(label));
    }
    if (ds.rows() == 0)
        throw ParseError("load_csv: no data rows in '" + path + "'");
    ds.class_count = max_label + 1;
    if (ds.class_count < 2)
        throw ParseError("load_csv: '" + path + "' holds a single class; need at least two");
    return ds;
}

// Stratified split: per class, floor(train_fraction * class_size) rows go to
// train after a seeded within-class shuffle, the remainder to test.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double train_fraction,
                                                    std::uint64_t seed) {
    ds.validate();
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split_train_test: train_fraction must lie in (0,1)");

    Dataset train, test;
    train.feature_dim = test.feature_dim = ds.feature_dim;
    train.class_count = test.class_count = ds.class_count;
    train.name = test.name = ds.name;

    for (int c = 0; c < ds.class_count; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.rows(); ++i)
            if (ds.labels[i] == c) idx.push_back(i);
        auto g = rng::engine(rng::derive(seed, rng::Stream::split, static_cast<std::uint64_t>(c)));
        rng::shuffle(idx, g);
        auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? train : test).append_row(ds.row(idx[i]), c);
    }
    if (train.rows() == 0 || test.rows() == 0)
        throw std::invalid_argument("split_train_test: fraction leaves an empty side");
    return {train, test};
}

// Builds the client layout: each dataset is split once, its train side is
// dealt round-robin over a seeded shuffle to that dataset's clients (sizes
// differ by at most one), and its test side is replicated to each of them.
// Client ids run 0..C-1 in dataset-major order.
inline std::vector<ClientShard> partition_clients(const std::vector<Dataset>& datasets,
                                                  int clients_per_dataset, double train_fraction,
                                                  std::uint64_t seed) {
    if (clients_per_dataset < 1)
        throw std::invalid_argument("partition_clients: clients_per_dataset must be >= 1");
    if (datasets.empty())
        throw std::invalid_argument("partition_clients: need at least one dataset");

    std::vector<ClientShard> shards;
    int next_id = 0;
    for (std::size_t di = 0; di < datasets.size(); ++di) {
        const Dataset& ds = datasets[di];
        auto [train, test] =
            split_train_test(ds, train_fraction, rng::derive(seed, rng::Stream::split, di));
        if (train.rows() < static_cast<std::size_t>(clients_per_dataset))
            throw std::invalid_argument("partition_clients: dataset '" + ds.name + "' train split has " +
                                        std::to_string(train.rows()) + " rows for " +
                                        std::to_string(clients_per_dataset) + " clients");

        std::vector<std::size_t> order(train.rows());
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto g = rng::engine(rng::derive(seed, rng::Stream::shard, di));
        rng::shuffle(order, g);

        for (int j = 0; j < clients_per_dataset; ++j) {
            ClientShard sh;
            sh.client_id = next_id++;
            sh.source_dataset = ds.name;
            sh.train.feature_dim = train.feature_dim;
            sh.train.class_count = train.class_count;
            sh.train.name = train.name;
            for (std::size_t pos = static_cast<std::size_t>(j); pos < order.size();
                 pos += static_cast<std::size_t>(clients_per_dataset))
                sh.train.append_row(train.row(order[pos]), train.labels[order[pos]]);
            sh.test = test;
            shards.push_back(std::move(sh));
        }
    }
    return shards;
}

}  // namespace dfl
