#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfl/dataset.hpp"
#include "dfl/errors.hpp"
#include "dfl/rng.hpp"

namespace dfl {

enum class Architecture { softmax, mlp };

struct ModelConfig {
    Architecture architecture = Architecture::softmax;
    int input_dim = 0;
    int class_count = 0;
    std::vector<int> hidden_dims;  // mlp only

    std::vector<int> layer_dims() const {
        std::vector<int> dims{input_dim};
        if (architecture == Architecture::mlp)
            dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
        dims.push_back(class_count);
        return dims;
    }

    std::size_t parameter_count() const {
        auto dims = layer_dims();
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l)
            n += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
        return n;
    }

    void validate() const {
        if (input_dim < 1) throw std::invalid_argument("model: input_dim must be >= 1");
        if (class_count < 2) throw std::invalid_argument("model: class_count must be >= 2");
        if (architecture == Architecture::mlp && hidden_dims.empty())
            throw std::invalid_argument("model: mlp needs at least one hidden layer");
        for (int h : hidden_dims)
            if (h < 1) throw std::invalid_argument("model: hidden layer widths must be >= 1");
    }
};

// Flat weight vector. Layout per layer: W (in x out, row-major) then bias.
// Two vectors are aggregation-compatible iff their shape tags are equal.
struct ParameterVector {
    std::vector<double> values;
    std::vector<int> shape_tag;  // layer dims

    bool compatible_with(const ParameterVector& o) const { return shape_tag == o.shape_tag; }
};

struct TrainSettings {
    int local_epochs = 1;
    int batch_size = 16;
    double learning_rate = 0.01;
    double lambda = 0.25;
    std::uint64_t seed = 0;

    void validate() const {
        if (local_epochs < 1) throw std::invalid_argument("train: local_epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw std::invalid_argument("train: learning_rate must be positive and finite");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("train: lambda must lie in [0,1]");
    }
};

namespace detail {

inline void check_params(const ParameterVector& params, const ModelConfig& config) {
    if (params.shape_tag != config.layer_dims() ||
        params.values.size() != config.parameter_count())
        throw std::invalid_argument("model: parameter vector does not match model config");
}

inline constexpr double kProbFloor = 1e-12;

// Dense layer: out[i][o] = b[o] + sum_j in[i][j] * W[j][o]
inline void affine(const std::vector<double>& in, std::size_t n, int in_dim, int out_dim,
                   const double* W, const double* b, std::vector<double>& out) {
    out.assign(n * static_cast<std::size_t>(out_dim), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = in.data() + i * in_dim;
        double* z = out.data() + i * out_dim;
        for (int o = 0; o < out_dim; ++o) z[o] = b[o];
        for (int j = 0; j < in_dim; ++j) {
            const double xj = x[j];
            const double* wrow = W + static_cast<std::size_t>(j) * out_dim;
            for (int o = 0; o < out_dim; ++o) z[o] += xj * wrow[o];
        }
    }
}

inline void softmax_rows(std::vector<double>& logits, std::size_t n, int k) {
    for (std::size_t i = 0; i < n; ++i) {
        double* z = logits.data() + i * k;
        double m = z[0];
        for (int o = 1; o < k; ++o) m = std::max(m, z[o]);
        double sum = 0.0;
        for (int o = 0; o < k; ++o) {
            z[o] = std::exp(z[o] - m);
            sum += z[o];
        }
        for (int o = 0; o < k; ++o) z[o] /= sum;
    }
}

// Forward pass keeping every activation; hidden layers are ReLU, the final
// row is softmax. act[0] is the input batch, act.back() the probabilities.
inline void forward_all(const ParameterVector& params, const ModelConfig& config,
                        std::span<const double> features, std::size_t n,
                        std::vector<std::vector<double>>& act) {
    const auto dims = config.layer_dims();
    const std::size_t layer_count = dims.size() - 1;
    act.resize(layer_count + 1);
    act[0].assign(features.begin(), features.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer_count; ++l) {
        const double* W = params.values.data() + off;
        const double* b = W + static_cast<std::size_t>(dims[l]) * dims[l + 1];
        affine(act[l], n, dims[l], dims[l + 1], W, b, act[l + 1]);
        off += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
        if (l + 1 < layer_count)
            for (auto& v : act[l + 1]) v = v > 0.0 ? v : 0.0;
    }
    softmax_rows(act[layer_count], n, dims.back());
}

inline double nll(const std::vector<double>& probs, std::span<const int> labels, int k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        sum += -std::log(std::max(probs[i * k + labels[i]], kProbFloor));
    return sum / static_cast<double>(labels.size());
}

struct LossGrad {
    double loss = 0.0;
    ParameterVector grad;
};

// Mean cross-entropy over the batch and its analytic gradient (backprop).
inline LossGrad loss_and_gradient(const ParameterVector& params, const ModelConfig& config,
                                  std::span<const double> features, std::span<const int> labels) {
    config.validate();
    check_params(params, config);
    if (labels.empty())
        throw std::invalid_argument("gradient: empty batch");
    if (features.size() != labels.size() * static_cast<std::size_t>(config.input_dim))
        throw std::invalid_argument("gradient: feature block does not match batch size and input_dim");

    const auto dims = config.layer_dims();
    const std::size_t layer_count = dims.size() - 1;
    const std::size_t n = labels.size();
    const int k = dims.back();

    std::vector<std::vector<double>> act;
    forward_all(params, config, features, n, act);

    LossGrad out;
    out.loss = nll(act[layer_count], labels, k);
    out.grad.shape_tag = params.shape_tag;
    out.grad.values.assign(params.values.size(), 0.0);

    // delta at the output: (p - onehot) / n
    std::vector<double> delta = act[layer_count];
    for (std::size_t i = 0; i < n; ++i) delta[i * k + labels[i]] -= 1.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& d : delta) d *= inv_n;

    // layer offsets
    std::vector<std::size_t> off(layer_count);
    std::size_t o = 0;
    for (std::size_t l = 0; l < layer_count; ++l) {
        off[l] = o;
        o += static_cast<std::size_t>(dims[l]) * dims[l + 1] + dims[l + 1];
    }

    std::vector<double> prev;
    for (std::size_t l = layer_count; l-- > 0;) {
        const int in_dim = dims[l], out_dim = dims[l + 1];
        const double* W = params.values.data() + off[l];
        double* dW = out.grad.values.data() + off[l];
        double* db = dW + static_cast<std::size_t>(in_dim) * out_dim;
        for (std::size_t i = 0; i < n; ++i) {
            const double* a = act[l].data() + i * in_dim;
            const double* d = delta.data() + i * out_dim;
            for (int j = 0; j < in_dim; ++j) {
                double* wrow = dW + static_cast<std::size_t>(j) * out_dim;
                const double aj = a[j];
                for (int q = 0; q < out_dim; ++q) wrow[q] += aj * d[q];
            }
            for (int q = 0; q < out_dim; ++q) db[q] += d[q];
        }
        if (l > 0) {
            prev.assign(n * static_cast<std::size_t>(in_dim), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double* d = delta.data() + i * out_dim;
                const double* a = act[l].data() + i * in_dim;
                double* p = prev.data() + i * in_dim;
                for (int j = 0; j < in_dim; ++j) {
                    if (a[j] <= 0.0) continue;  // ReLU mask
                    const double* wrow = W + static_cast<std::size_t>(j) * out_dim;
                    double s = 0.0;
                    for (int q = 0; q < out_dim; ++q) s += d[q] * wrow[q];
                    p[j] = s;
                }
            }
            delta.swap(prev);
        }
    }
    return out;
}

}  // namespace detail

// Deterministic init: weights small uniform, biases zero. Same (config, seed)
// always yields the same vector.
inline ParameterVector init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ParameterVector p;
    p.shape_tag = config.layer_dims();
    p.values.assign(config.parameter_count(), 0.0);
    auto g = rng::engine(rng::derive(seed, rng::Stream::init_model));
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < p.shape_tag.size(); ++l) {
        const std::size_t w = static_cast<std::size_t>(p.shape_tag[l]) * p.shape_tag[l + 1];
        for (std::size_t i = 0; i < w; ++i) p.values[off + i] = rng::uniform(g, -0.1, 0.1);
        off += w + p.shape_tag[l + 1];  // biases stay zero
    }
    return p;
}

// Class probabilities, one row per sample; each row sums to 1.
inline std::vector<double> forward(const ParameterVector& params, const ModelConfig& config,
                                   std::span<const double> features) {
    config.validate();
    detail::check_params(params, config);
    if (features.empty() || features.size() % static_cast<std::size_t>(config.input_dim) != 0)
        throw std::invalid_argument("forward: feature size is not a multiple of input_dim");
    const std::size_t n = features.size() / config.input_dim;
    std::vector<std::vector<double>> act;
    detail::forward_all(params, config, features, n, act);
    return std::move(act.back());
}

// Mean cross-entropy of a feature/label block.
inline double batch_loss(const ParameterVector& params, const ModelConfig& config,
                         std::span<const double> features, std::span<const int> labels) {
    if (labels.empty())
        throw std::invalid_argument("batch_loss: empty batch");
    auto probs = forward(params, config, features);
    return detail::nll(probs, labels, config.class_count);
}

// Mean cross-entropy over a dataset; probabilities are clamped at 1e-12
// before the log, so the result is always finite.
inline double evaluate_loss(const ParameterVector& params, const ModelConfig& config,
                            const Dataset& ds) {
    ds.validate();
    if (ds.class_count != config.class_count)
        throw std::invalid_argument("evaluate_loss: dataset class_count does not match model");
    return batch_loss(params, config, ds.features, ds.labels);
}

// Analytic gradient of the mean cross-entropy over a batch.
inline ParameterVector gradient(const ParameterVector& params, const ModelConfig& config,
                                std::span<const double> features, std::span<const int> labels) {
    return detail::loss_and_gradient(params, config, features, labels).grad;
}

// The external term is constant in the parameters, so it shifts the reported
// loss without touching the gradient.
inline double adjusted_loss(double local_loss, double received_mean_loss, double lambda) {
    return local_loss + lambda * received_mean_loss;
}

struct SgdResult {
    ParameterVector params;
    double mean_train_loss = 0.0;
    double adjusted_loss = 0.0;
};

// Mini-batch SGD: per-epoch seeded reshuffle, ragged final batch kept, batch
// loss recorded before each update step. mean_train_loss averages the
// per-batch losses of the final epoch.
inline SgdResult sgd_epochs(const ParameterVector& start, const ModelConfig& config,
                            const Dataset& train, const TrainSettings& settings,
                            double correction) {
    settings.validate();
    config.validate();
    train.validate();
    if (train.class_count != config.class_count)
        throw std::invalid_argument("sgd_epochs: dataset class_count does not match model");
    if (!(std::isfinite(correction) && correction >= 0.0))
        throw std::invalid_argument("sgd_epochs: correction must be finite and >= 0");
    detail::check_params(start, config);

    ParameterVector params = start;
    const std::size_t n = train.rows();
    const std::size_t batch = static_cast<std::size_t>(settings.batch_size);
    const int dim = config.input_dim;

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<double> feats;
    std::vector<int> labs;

    double final_epoch_sum = 0.0;
    std::size_t final_epoch_batches = 0;

    for (int e = 0; e < settings.local_epochs; ++e) {
        auto g = rng::engine(rng::derive(settings.seed, rng::Stream::epoch_shuffle,
                                         static_cast<std::uint64_t>(e)));
        rng::shuffle(idx, g);
        const bool last_epoch = (e == settings.local_epochs - 1);
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < n; begin += batch, ++batch_index) {
            const std::size_t end = std::min(begin + batch, n);
            feats.clear();
            labs.clear();
            for (std::size_t i = begin; i < end; ++i) {
                const double* r = train.row(idx[i]);
                feats.insert(feats.end(), r, r + dim);
                labs.push_back(train.labels[idx[i]]);
            }
            auto lg = detail::loss_and_gradient(params, config, feats, labs);
            if (!std::isfinite(lg.loss))
                throw NumericError("sgd_epochs: non-finite loss at epoch " + std::to_string(e) +
                                   ", batch " + std::to_string(batch_index));
            if (last_epoch) {
                final_epoch_sum += lg.loss;
                ++final_epoch_batches;
            }
            for (std::size_t i = 0; i < params.values.size(); ++i)
                params.values[i] -= settings.learning_rate * lg.grad.values[i];
        }
    }

    SgdResult out;
    out.params = std::move(params);
    out.mean_train_loss = final_epoch_sum / static_cast<double>(final_epoch_batches);
    out.adjusted_loss = adjusted_loss(out.mean_train_loss, correction, settings.lambda);
    return out;
}

}  // namespace dfl
