#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dfl/dataset.hpp"
#include "dfl/model.hpp"

namespace dfl {

// K x K counts, rows = true class, columns = predicted class.
struct ConfusionMatrix {
    int class_count = 0;
    std::vector<long long> counts;

    static ConfusionMatrix zeros(int k) {
        ConfusionMatrix cm;
        cm.class_count = k;
        cm.counts.assign(static_cast<std::size_t>(k) * k, 0);
        return cm;
    }

    long long at(int true_class, int predicted) const {
        return counts[static_cast<std::size_t>(true_class) * class_count + predicted];
    }
    long long& at(int true_class, int predicted) {
        return counts[static_cast<std::size_t>(true_class) * class_count + predicted];
    }
    long long total() const {
        long long t = 0;
        for (long long c : counts) t += c;
        return t;
    }
};

// Prediction is the argmax of forward(); ties resolve to the lowest class.
inline ConfusionMatrix confusion(const ParameterVector& params, const ModelConfig& config,
                                 const Dataset& test) {
    test.validate();
    if (test.class_count != config.class_count)
        throw std::invalid_argument("confusion: dataset class_count does not match model");
    auto probs = forward(params, config, test.features);
    const int k = config.class_count;
    auto cm = ConfusionMatrix::zeros(k);
    for (std::size_t i = 0; i < test.rows(); ++i) {
        const double* p = probs.data() + i * k;
        int pred = 0;
        for (int c = 1; c < k; ++c)
            if (p[c] > p[pred]) pred = c;
        ++cm.at(test.labels[i], pred);
    }
    return cm;
}

struct Scores {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Multiclass scores: accuracy is trace/total; precision, recall and F1 are
// macro-averages of the per-class one-vs-rest values. A class with zero
// predicted positives contributes precision 0, one with zero actual
// positives contributes recall 0 (and F1 0).
inline Scores scores(const ConfusionMatrix& cm) {
    const long long total = cm.total();
    if (total == 0)
        throw std::invalid_argument("scores: empty confusion matrix");
    const int k = cm.class_count;

    long long trace = 0;
    double precision_sum = 0.0, recall_sum = 0.0, f1_sum = 0.0;
    for (int c = 0; c < k; ++c) {
        const long long tp = cm.at(c, c);
        trace += tp;
        long long row = 0, col = 0;
        for (int j = 0; j < k; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const long long fp = col - tp;
        const long long fn = row - tp;
        const double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        precision_sum += p;
        recall_sum += r;
        f1_sum += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }

    Scores s;
    s.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    s.precision = precision_sum / k;
    s.recall = recall_sum / k;
    s.f1 = f1_sum / k;
    return s;
}

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;
};

// Arithmetic mean and sample standard deviation (n-1 divisor; 0 for n = 1).
inline MeanStd summarize(const std::vector<double>& values) {
    if (values.empty())
        throw std::invalid_argument("summarize: empty value list");
    MeanStd out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    return out;
}

}  // namespace dfl
