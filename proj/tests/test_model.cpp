#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dfl/model.hpp"
#include "helpers.hpp"

using namespace dfl;
using Catch::Approx;

namespace {

ModelConfig softmax_config(int d, int k) {
    ModelConfig c;
    c.architecture = Architecture::softmax;
    c.input_dim = d;
    c.class_count = k;
    return c;
}

ModelConfig mlp_config(int d, std::vector<int> hidden, int k) {
    ModelConfig c;
    c.architecture = Architecture::mlp;
    c.input_dim = d;
    c.class_count = k;
    c.hidden_dims = std::move(hidden);
    return c;
}

// Central finite differences of the batch loss, the independent gradient
// oracle. Agreement is relative with an absolute floor of 1.
void require_matches_finite_differences(const ParameterVector& params, const ModelConfig& config,
                                        const std::vector<double>& feats,
                                        const std::vector<int>& labs) {
    auto grad = gradient(params, config, feats, labs);
    const double h = 1e-5;
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        ParameterVector up = params, down = params;
        up.values[i] += h;
        down.values[i] -= h;
        const double fd = (batch_loss(up, config, feats, labs) -
                           batch_loss(down, config, feats, labs)) / (2.0 * h);
        const double denom = std::max({1.0, std::abs(fd), std::abs(grad.values[i])});
        REQUIRE(std::abs(grad.values[i] - fd) / denom < 1e-4);
    }
}

}  // namespace

TEST_CASE("init is deterministic and sized by the architecture") {
    auto cfg = softmax_config(2, 3);
    auto a = init_model(cfg, 5);
    auto b = init_model(cfg, 5);
    REQUIRE(a.values == b.values);
    REQUIRE(a.values.size() == 2 * 3 + 3);

    auto mlp = mlp_config(4, {5}, 3);
    auto m = init_model(mlp, 5);
    REQUIRE(m.values.size() == 4 * 5 + 5 + 5 * 3 + 3);  // 43
    REQUIRE(init_model(cfg, 6).values != a.values);
}

TEST_CASE("forward of zero parameters is the uniform distribution") {
    auto cfg = softmax_config(3, 4);
    ParameterVector zero{std::vector<double>(cfg.parameter_count(), 0.0), cfg.layer_dims()};
    std::vector<double> x{0.3, -1.0, 2.5};
    auto p = forward(zero, cfg, x);
    REQUIRE(p.size() == 4);
    for (double v : p) REQUIRE(v == Approx(0.25).margin(1e-12));
}

TEST_CASE("forward rows always normalize") {
    auto cfg = mlp_config(4, {6}, 3);
    auto params = init_model(cfg, 123);
    auto g = rng::engine(1);
    std::vector<double> x(5 * 4);
    for (auto& v : x) v = rng::uniform(g, -3.0, 3.0);
    auto p = forward(params, cfg, x);
    REQUIRE(p.size() == 5 * 3);
    for (int i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            REQUIRE(p[i * 3 + c] >= 0.0);
            sum += p[i * 3 + c];
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("forward with equal logits splits evenly") {
    auto cfg = softmax_config(1, 2);
    ParameterVector params{{1.0, -1.0, 0.0, 0.0}, cfg.layer_dims()};  // W then biases
    std::vector<double> x{0.0};
    auto p = forward(params, cfg, x);
    REQUIRE(p[0] == Approx(0.5).margin(1e-12));
    REQUIRE(p[1] == Approx(0.5).margin(1e-12));
}

TEST_CASE("forward rejects shape mismatches") {
    auto cfg = softmax_config(3, 2);
    auto params = init_model(cfg, 1);
    std::vector<double> bad{1.0, 2.0};  // not a multiple of input_dim
    REQUIRE_THROWS_AS(forward(params, cfg, bad), std::invalid_argument);
    auto other = init_model(softmax_config(4, 2), 1);
    std::vector<double> x{1.0, 2.0, 3.0};
    REQUIRE_THROWS_AS(forward(other, cfg, x), std::invalid_argument);
}

TEST_CASE("loss of zero parameters is log K") {
    auto cfg = softmax_config(2, 4);
    ParameterVector zero{std::vector<double>(cfg.parameter_count(), 0.0), cfg.layer_dims()};
    auto ds = generate_synthetic(3, 4, 2, {5, 5, 5, 5}, 1.0);
    REQUIRE(evaluate_loss(zero, cfg, ds) == Approx(std::log(4.0)).margin(1e-6));
}

TEST_CASE("loss of a near-perfect predictor is near zero") {
    auto cfg = softmax_config(1, 2);
    // huge margin drives the true-class probability to 1
    ParameterVector params{{50.0, -50.0, 0.0, 0.0}, cfg.layer_dims()};
    Dataset ds;
    ds.feature_dim = 1;
    ds.class_count = 2;
    ds.name = "sep";
    double x;
    x = 1.0;  ds.append_row(&x, 0);
    x = -1.0; ds.append_row(&x, 1);
    REQUIRE(evaluate_loss(params, cfg, ds) <= 1e-6);
    REQUIRE(evaluate_loss(params, cfg, ds) >= 0.0);
}

TEST_CASE("loss equals the externally averaged per-sample loss") {
    auto cfg = softmax_config(3, 3);
    auto params = init_model(cfg, 17);
    auto ds = generate_synthetic(17, 3, 3, {4, 3, 3}, 1.5);
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        auto p = forward(params, cfg, std::span<const double>(ds.row(i), 3));
        sum += -std::log(std::max(p[ds.labels[i]], 1e-12));
    }
    REQUIRE(evaluate_loss(params, cfg, ds) == sum / static_cast<double>(ds.rows()));
}

TEST_CASE("loss stays within the clamp bound") {
    auto cfg = softmax_config(1, 2);
    ParameterVector params{{500.0, -500.0, 0.0, 0.0}, cfg.layer_dims()};
    Dataset ds;
    ds.feature_dim = 1;
    ds.class_count = 2;
    ds.name = "wrong";
    double x = 1.0;
    ds.append_row(&x, 1);  // confidently wrong
    const double loss = evaluate_loss(params, cfg, ds);
    REQUIRE(loss <= -std::log(1e-12));
    REQUIRE(loss >= 0.0);
}

TEST_CASE("gradient vanishes on a balanced mirrored batch") {
    auto cfg = softmax_config(2, 2);
    ParameterVector zero{std::vector<double>(cfg.parameter_count(), 0.0), cfg.layer_dims()};
    std::vector<double> feats{1.0, 2.0, -1.0, -2.0, 1.0, 2.0, -1.0, -2.0};
    std::vector<int> labs{0, 0, 1, 1};
    auto g = gradient(zero, cfg, feats, labs);
    for (double v : g.values) REQUIRE(std::abs(v) <= 1e-9);
}

TEST_CASE("single-sample gradient is the textbook identity") {
    auto cfg = softmax_config(2, 3);
    auto params = init_model(cfg, 3);
    std::vector<double> x{0.7, -1.2};
    std::vector<int> y{2};
    auto p = forward(params, cfg, x);
    auto g = gradient(params, cfg, x, y);
    // dlogits = p - onehot(y); dW[j][c] = x[j] * dlogits[c]; db = dlogits
    for (int c = 0; c < 3; ++c) {
        const double dl = p[c] - (c == 2 ? 1.0 : 0.0);
        REQUIRE(g.values[0 * 3 + c] == Approx(x[0] * dl).margin(1e-12));
        REQUIRE(g.values[1 * 3 + c] == Approx(x[1] * dl).margin(1e-12));
        REQUIRE(g.values[2 * 3 + c] == Approx(dl).margin(1e-12));
    }
}

TEST_CASE("gradients match finite differences on random probes") {
    auto g = rng::engine(99);
    for (int probe = 0; probe < 30; ++probe) {
        const int d = 2 + static_cast<int>(rng::below(g, 4));
        const int k = 2 + static_cast<int>(rng::below(g, 3));
        ModelConfig cfg = probe % 2 == 0
                              ? softmax_config(d, k)
                              : mlp_config(d, {2 + static_cast<int>(rng::below(g, 4))}, k);
        ParameterVector params;
        params.shape_tag = cfg.layer_dims();
        params.values.resize(cfg.parameter_count());
        for (auto& v : params.values) v = rng::uniform(g, -1.0, 1.0);
        const int n = 1 + static_cast<int>(rng::below(g, 7));
        std::vector<double> feats(n * d);
        for (auto& v : feats) v = rng::uniform(g, -2.0, 2.0);
        std::vector<int> labs(n);
        for (auto& y : labs) y = static_cast<int>(rng::below(g, k));
        require_matches_finite_differences(params, cfg, feats, labs);
    }
}

TEST_CASE("sgd with lambda zero reports the raw training loss") {
    auto cfg = softmax_config(2, 2);
    auto ds = generate_synthetic(5, 2, 2, {20, 20}, 1.0);
    TrainSettings s;
    s.local_epochs = 2;
    s.batch_size = 8;
    s.lambda = 0.0;
    s.seed = 4;
    auto res = sgd_epochs(init_model(cfg, 1), cfg, ds, s, 123.0);
    REQUIRE(res.adjusted_loss == res.mean_train_loss);
}

TEST_CASE("adjusted loss is plain arithmetic") {
    REQUIRE(adjusted_loss(0.4, 0.2, 0.25) == Approx(0.45).margin(1e-15));
    REQUIRE(adjusted_loss(0.7, 12.0, 0.0) == 0.7);
    for (double lambda : {0.0, 0.25, 0.5, 0.75})
        REQUIRE(adjusted_loss(1.0, 2.0, lambda) == Approx(1.0 + 2.0 * lambda).margin(1e-15));
}

TEST_CASE("sgd reduces the loss on a separable problem") {
    auto cfg = softmax_config(2, 2);
    // two well-separated clusters
    Dataset ds;
    ds.feature_dim = 2;
    ds.class_count = 2;
    ds.name = "sep";
    auto g = rng::engine(8);
    double x[2];
    for (int i = 0; i < 60; ++i) {
        x[0] = 2.0 + 0.4 * rng::normal(g);
        x[1] = 2.0 + 0.4 * rng::normal(g);
        ds.append_row(x, 0);
        x[0] = -2.0 + 0.4 * rng::normal(g);
        x[1] = -2.0 + 0.4 * rng::normal(g);
        ds.append_row(x, 1);
    }
    auto params = init_model(cfg, 2);
    const double initial = evaluate_loss(params, cfg, ds);
    TrainSettings s;
    s.local_epochs = 20;
    s.batch_size = 16;
    s.learning_rate = 0.01;
    s.seed = 3;
    auto res = sgd_epochs(params, cfg, ds, s, 0.0);
    REQUIRE(evaluate_loss(res.params, cfg, ds) < initial);
}

TEST_CASE("the correction term never reaches the parameters") {
    auto cfg = mlp_config(3, {4}, 3);
    auto ds = generate_synthetic(6, 3, 3, {12, 9, 11}, 1.0);
    TrainSettings s;
    s.local_epochs = 3;
    s.batch_size = 4;
    s.lambda = 0.75;
    s.seed = 11;
    auto with = sgd_epochs(init_model(cfg, 4), cfg, ds, s, 0.9);
    auto without = sgd_epochs(init_model(cfg, 4), cfg, ds, s, 0.0);
    REQUIRE(with.params.values == without.params.values);  // bit-identical
    REQUIRE(with.mean_train_loss == without.mean_train_loss);
    REQUIRE(with.adjusted_loss == Approx(without.mean_train_loss + 0.75 * 0.9).margin(1e-15));
}

TEST_CASE("batch size above the dataset keeps a single batch") {
    auto cfg = softmax_config(2, 2);
    auto ds = generate_synthetic(9, 2, 2, {5, 5}, 1.0);
    TrainSettings s;
    s.batch_size = 64;
    s.seed = 2;
    auto res = sgd_epochs(init_model(cfg, 1), cfg, ds, s, 0.0);
    REQUIRE(std::isfinite(res.mean_train_loss));
}

TEST_CASE("non-finite training loss raises a numeric failure naming the batch") {
    auto cfg = softmax_config(2, 2);
    Dataset ds;
    ds.feature_dim = 2;
    ds.class_count = 2;
    ds.name = "overflow";
    double x[2] = {1e308, 1e308};
    ds.append_row(x, 0);
    double y[2] = {-1e308, -1e308};
    ds.append_row(y, 1);
    ParameterVector params{{1.0, -1.0, 1.0, -1.0, 0.0, 0.0}, cfg.layer_dims()};
    TrainSettings s;
    s.seed = 1;
    REQUIRE_THROWS_MATCHES(sgd_epochs(params, cfg, ds, s, 0.0), NumericError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("batch")));
}

TEST_CASE("sgd is deterministic in its seed") {
    auto cfg = softmax_config(3, 3);
    auto ds = generate_synthetic(12, 3, 3, {15, 10, 12}, 1.0);
    TrainSettings s;
    s.local_epochs = 2;
    s.batch_size = 8;
    s.seed = 77;
    auto a = sgd_epochs(init_model(cfg, 1), cfg, ds, s, 0.0);
    auto b = sgd_epochs(init_model(cfg, 1), cfg, ds, s, 0.0);
    REQUIRE(a.params.values == b.params.values);
    REQUIRE(a.mean_train_loss == b.mean_train_loss);
    s.seed = 78;
    auto c = sgd_epochs(init_model(cfg, 1), cfg, ds, s, 0.0);
    REQUIRE(a.params.values != c.params.values);
}
