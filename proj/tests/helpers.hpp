#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "dfl/dataset.hpp"

namespace testutil {

// Exact byte identity of a row, features plus label.
inline std::string row_key(const dfl::Dataset& ds, std::size_t i) {
    std::string key(ds.feature_dim * sizeof(double) + sizeof(int), '\0');
    std::memcpy(key.data(), ds.row(i), ds.feature_dim * sizeof(double));
    std::memcpy(key.data() + ds.feature_dim * sizeof(double), &ds.labels[i], sizeof(int));
    return key;
}

inline std::multiset<std::string> row_multiset(const dfl::Dataset& ds) {
    std::multiset<std::string> rows;
    for (std::size_t i = 0; i < ds.rows(); ++i) rows.insert(row_key(ds, i));
    return rows;
}

inline std::vector<int> label_histogram(const dfl::Dataset& ds) {
    std::vector<int> h(ds.class_count, 0);
    for (int y : ds.labels) ++h[y];
    return h;
}

// Unique scratch directory under the system temp root.
inline std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("dfl-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

}  // namespace testutil
