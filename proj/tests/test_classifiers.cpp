#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ercfuse/classifiers.hpp"
#include "ercfuse/rng.hpp"
#include "ercfuse/synthetic.hpp"
#include "test_util.hpp"

using namespace ercfuse;
using doctest::Contains;

namespace {

LabelSet labels_n(std::size_t n) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) {
        names.push_back("l" + std::to_string(i));
    }
    return LabelSet(names);
}

SoftmaxModel random_model(std::size_t k, std::size_t d, Xorshift64Star& rng) {
    auto m = SoftmaxModel::zeros(labels_n(k), d);
    for (auto& w : m.weights) {
        w = 2.0 * rng.uniform() - 1.0;
    }
    for (auto& b : m.bias) {
        b = 2.0 * rng.uniform() - 1.0;
    }
    return m;
}

// Straightforward objective, written without the library's softmax.
double naive_loss(const SoftmaxModel& m, const std::vector<FeatureVector>& xs, const std::vector<LabelIndex>& ys,
                  double l2) {
    const std::size_t k = m.n_labels();
    const std::size_t d = m.feature_dim;
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::vector<double> z(k);
        for (std::size_t c = 0; c < k; ++c) {
            z[c] = m.bias[c];
            for (std::size_t j = 0; j < d; ++j) {
                z[c] += m.weights[c * d + j] * xs[i][j];
            }
        }
        double denom = 0.0;
        for (double v : z) {
            denom += std::exp(v);
        }
        total += std::log(denom) - z[ys[i]];
    }
    double sq = 0.0;
    for (double w : m.weights) {
        sq += w * w;
    }
    return total / static_cast<double>(xs.size()) + 0.5 * l2 * sq;
}

std::vector<Example> as_batch(const std::vector<FeatureVector>& xs, const std::vector<LabelIndex>& ys) {
    std::vector<Example> batch;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        batch.push_back({xs[i], ys[i]});
    }
    return batch;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)); }

double train_accuracy(const SoftmaxModel& m, const synthetic::DenseFixture& fx) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < fx.features.size(); ++i) {
        ok += predict_proba(m, fx.features[i]).argmax() == fx.labels[i];
    }
    return static_cast<double>(ok) / static_cast<double>(fx.features.size());
}

const LabelSet kJAN({"joy", "anger", "neutral"});

}  // namespace

TEST_CASE("probability distribution invariants") {
    CHECK_NOTHROW(ProbabilityDistribution({0.25, 0.75}));
    CHECK_THROWS_AS(ProbabilityDistribution({0.5, 0.6}), Error);
    CHECK_THROWS_AS(ProbabilityDistribution({1.5, -0.5}), Error);
    CHECK_THROWS_AS(ProbabilityDistribution(std::vector<double>{}), Error);
    CHECK(ProbabilityDistribution::uniform(4).probs() == std::vector<double>{0.25, 0.25, 0.25, 0.25});
    CHECK(ProbabilityDistribution::one_hot(3, 2).argmax() == 2);
    CHECK(ProbabilityDistribution({0.4, 0.4, 0.2}).argmax() == 0);
}

TEST_CASE("softmax is stable and shift invariant") {
    const std::vector<double> z{1000.0, 1001.0, 999.0};
    const auto p = softmax(z);
    double s = 0.0;
    for (double v : p) {
        CHECK(std::isfinite(v));
        s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
    const std::vector<double> shifted{0.0, 1.0, -1.0};
    const auto q = softmax(shifted);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(p[i] - q[i]) < 1e-12);
    }
}

TEST_CASE("zero model loss is ln(n_labels)") {
    Xorshift64Star rng(1);
    for (std::size_t k : {2u, 3u, 7u}) {
        const auto m = SoftmaxModel::zeros(labels_n(k), 5);
        std::vector<FeatureVector> xs(9, FeatureVector(5));
        std::vector<LabelIndex> ys(9);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            for (auto& v : xs[i]) {
                v = rng.uniform() * 10.0 - 5.0;
            }
            ys[i] = rng.below(k);
        }
        const auto lg = loss_and_gradient(m, as_batch(xs, ys), 0.3);
        CHECK(std::abs(lg.loss - std::log(static_cast<double>(k))) < 1e-12);
    }
}

TEST_CASE("loss matches a direct computation") {
    Xorshift64Star rng(2);
    const auto m = random_model(4, 6, rng);
    std::vector<FeatureVector> xs(5, FeatureVector(6));
    std::vector<LabelIndex> ys(5);
    for (std::size_t i = 0; i < 5; ++i) {
        for (auto& v : xs[i]) {
            v = 2.0 * rng.uniform() - 1.0;
        }
        ys[i] = rng.below(4);
    }
    CHECK(std::abs(loss_and_gradient(m, as_batch(xs, ys), 0.01).loss - naive_loss(m, xs, ys, 0.01)) < 1e-12);
}

TEST_CASE("gradient matches central finite differences") {
    Xorshift64Star rng(3);
    const double h = 1e-5;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t k = 3 + rng.below(5);
        const std::size_t d = 2 + rng.below(6);
        auto m = random_model(k, d, rng);
        std::vector<FeatureVector> xs(5, FeatureVector(d));
        std::vector<LabelIndex> ys(5);
        for (std::size_t i = 0; i < 5; ++i) {
            for (auto& v : xs[i]) {
                v = 2.0 * rng.uniform() - 1.0;
            }
            ys[i] = rng.below(k);
        }
        const double l2 = trial % 2 ? 0.05 : 0.0;
        const auto g = loss_and_gradient(m, as_batch(xs, ys), l2).grad;
        double worst = 0.0;
        for (std::size_t p = 0; p < m.weights.size(); ++p) {
            const double saved = m.weights[p];
            m.weights[p] = saved + h;
            const double up = naive_loss(m, xs, ys, l2);
            m.weights[p] = saved - h;
            const double down = naive_loss(m, xs, ys, l2);
            m.weights[p] = saved;
            worst = std::max(worst, rel_err(g.weights[p], (up - down) / (2.0 * h)));
        }
        for (std::size_t c = 0; c < k; ++c) {
            const double saved = m.bias[c];
            m.bias[c] = saved + h;
            const double up = naive_loss(m, xs, ys, l2);
            m.bias[c] = saved - h;
            const double down = naive_loss(m, xs, ys, l2);
            m.bias[c] = saved;
            worst = std::max(worst, rel_err(g.bias[c], (up - down) / (2.0 * h)));
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("class weights scale per-example terms") {
    Xorshift64Star rng(12);
    const auto m = random_model(3, 4, rng);
    std::vector<FeatureVector> xs(6, FeatureVector(4));
    std::vector<LabelIndex> ys{0, 1, 2, 0, 1, 2};
    for (auto& x : xs) {
        for (auto& v : x) {
            v = rng.uniform();
        }
    }
    const std::vector<double> ones{1.0, 1.0, 1.0};
    CHECK(loss_and_gradient(m, as_batch(xs, ys), 0.0, ones).loss ==
          doctest::Approx(loss_and_gradient(m, as_batch(xs, ys), 0.0).loss).epsilon(1e-12));
    const std::vector<double> only0{3.0, 0.0, 0.0};
    std::vector<FeatureVector> xs0{xs[0], xs[3]};
    std::vector<LabelIndex> ys0{0, 0};
    // Two of six examples carry weight 3: mean equals the plain mean over those two.
    CHECK(loss_and_gradient(m, as_batch(xs, ys), 0.0, only0).loss ==
          doctest::Approx(naive_loss(m, xs0, ys0, 0.0)).epsilon(1e-12));
    const std::vector<LabelIndex> imbalanced{0, 0, 0, 1};
    CHECK(inverse_frequency_weights(imbalanced, 3) == std::vector<double>{4.0 / 6.0, 2.0, 0.0});
}

TEST_CASE("duplicating the batch changes nothing") {
    Xorshift64Star rng(4);
    const auto m = random_model(7, 5, rng);
    std::vector<FeatureVector> xs(4, FeatureVector(5));
    std::vector<LabelIndex> ys(4);
    for (std::size_t i = 0; i < 4; ++i) {
        for (auto& v : xs[i]) {
            v = rng.uniform();
        }
        ys[i] = rng.below(7);
    }
    auto xs2 = xs;
    auto ys2 = ys;
    xs2.insert(xs2.end(), xs.begin(), xs.end());
    ys2.insert(ys2.end(), ys.begin(), ys.end());
    const auto a = loss_and_gradient(m, as_batch(xs, ys), 0.01);
    const auto b = loss_and_gradient(m, as_batch(xs2, ys2), 0.01);
    CHECK(std::abs(a.loss - b.loss) < 1e-12);
    for (std::size_t i = 0; i < a.grad.weights.size(); ++i) {
        CHECK(std::abs(a.grad.weights[i] - b.grad.weights[i]) < 1e-12);
    }
    for (std::size_t i = 0; i < a.grad.bias.size(); ++i) {
        CHECK(std::abs(a.grad.bias[i] - b.grad.bias[i]) < 1e-12);
    }
}

TEST_CASE("loss_and_gradient errors") {
    const auto m = SoftmaxModel::zeros(labels_n(3), 2);
    const FeatureVector short_x{1.0};
    const FeatureVector bad_x{1.0, std::nan("")};
    CHECK_THROWS_AS(loss_and_gradient(m, {}, 0.0), Error);
    std::vector<Example> b1{{short_x, 0}};
    CHECK_THROWS_AS(loss_and_gradient(m, b1, 0.0), DimensionError);
    std::vector<Example> b2{{bad_x, 0}};
    CHECK_THROWS_AS(loss_and_gradient(m, b2, 0.0), Error);
}

TEST_CASE("training separates a 2-class toy set at lr 0.5") {
    const auto fx = synthetic::separable_two_class(10, 21);
    REQUIRE(fx.features.size() == 20);
    TrainConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.epochs = 200;
    cfg.seed = 5;
    const auto m = train_softmax(fx.features, fx.labels, labels_n(2), cfg);
    CHECK(train_accuracy(m, fx) == 1.0);
    CHECK(m.loss_trace.size() == 200);
}

TEST_CASE("train config invariants") {
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(train_softmax({}, {}, labels_n(2), TrainConfig{}), Error);
}

TEST_CASE("training is bit-reproducible") {
    const auto fx = synthetic::separable_clusters(4, 8, 6, 77);
    TrainConfig cfg;
    cfg.seed = 123;
    cfg.batch_size = 5;
    cfg.standardize = true;
    const auto a = train_softmax(fx.features, fx.labels, labels_n(4), cfg);
    const auto b = train_softmax(fx.features, fx.labels, labels_n(4), cfg);
    CHECK(a == b);
    cfg.seed = 124;
    CHECK_FALSE(train_softmax(fx.features, fx.labels, labels_n(4), cfg).weights == a.weights);
}

TEST_CASE("loss trace is non-increasing at lr 0.05 with l2") {
    const auto fx = synthetic::separable_clusters(7, 10, 20, 2024);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.epochs = 100;
    cfg.l2 = 1e-3;
    cfg.seed = 1;
    const auto m = train_softmax(fx.features, fx.labels, labels_n(7), cfg);
    REQUIRE(m.loss_trace.size() == 100);
    for (std::size_t e = 1; e < m.loss_trace.size(); ++e) {
        CHECK(m.loss_trace[e] <= m.loss_trace[e - 1]);
    }
}

TEST_CASE("predict_proba properties") {
    const auto zero = SoftmaxModel::zeros(labels_n(5), 3);
    const FeatureVector x{0.3, -1.0, 2.0};
    const auto uniform = predict_proba(zero, x);
    for (double p : uniform.probs()) {
        CHECK(std::abs(p - 0.2) < 1e-15);
    }

    Xorshift64Star rng(6);
    auto m = random_model(5, 3, rng);
    auto shifted = m;
    for (auto& b : shifted.bias) {
        b += 17.5;
    }
    const auto p = predict_proba(m, x).probs();
    const auto q = predict_proba(shifted, x).probs();
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(std::abs(p[i] - q[i]) < 1e-12);
    }

    for (int i = 0; i < 100; ++i) {
        FeatureVector r{rng.uniform() * 4 - 2, rng.uniform() * 4 - 2, rng.uniform() * 4 - 2};
        std::vector<double> z(5);
        for (std::size_t c = 0; c < 5; ++c) {
            z[c] = m.bias[c] + m.weights[c * 3] * r[0] + m.weights[c * 3 + 1] * r[1] + m.weights[c * 3 + 2] * r[2];
        }
        const auto expected = static_cast<LabelIndex>(std::max_element(z.begin(), z.end()) - z.begin());
        CHECK(predict_proba(m, r).argmax() == expected);
    }
    const FeatureVector wrong{1.0};
    CHECK_THROWS_AS(predict_proba(m, wrong), DimensionError);
}

TEST_CASE("predict_table") {
    Xorshift64Star rng(7);
    const auto m = random_model(3, 2, rng);
    CHECK(predict_table(m, {}, "m").size() == 0);
    std::map<std::string, FeatureVector> feats;
    for (int i = 0; i < 12; ++i) {
        feats["u" + std::to_string(i)] = {rng.uniform(), rng.uniform()};
    }
    const auto t = predict_table(m, feats, "m");
    CHECK(t.size() == feats.size());
    CHECK(t.timing_seconds.has_value());
    CHECK(*t.timing_seconds >= 0.0);
    // Rows depend only on the row's features, whatever else is in the map.
    std::map<std::string, FeatureVector> half;
    for (const auto& [id, x] : feats) {
        if (id.back() % 2) {
            half[id] = x;
        }
    }
    const auto h = predict_table(m, half, "m");
    for (const auto& [id, row] : h.rows) {
        CHECK(row == t.rows.at(id));
    }
}

TEST_CASE("external predictions: column permutation") {
    testutil::TempDir dir;
    testutil::write_file(dir / "a.csv", "id,joy,anger,neutral\nu1,0.5,0.25,0.25\nu2,0.1,0.2,0.7\n");
    testutil::write_file(dir / "b.csv", "id,neutral,joy,anger\nu2,0.7,0.1,0.2\nu1,0.25,0.5,0.25\n");
    const auto a = load_external_predictions(dir / "a.csv", kJAN);
    const auto b = load_external_predictions(dir / "b.csv", kJAN);
    CHECK(a.rows == b.rows);
    CHECK(a.label_set == kJAN);
}

TEST_CASE("external predictions: tolerance rule") {
    const auto t = parse_predictions_csv("id,joy,anger,neutral\nu1,0.50005,0.25,0.25\n", kJAN, "mem");
    double s = 0.0;
    for (double p : t.rows.at("u1").probs()) {
        s += p;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
    try {
        parse_predictions_csv("id,joy,anger,neutral\nu9,0.25,0.125,0.125\n", kJAN, "mem");
        FAIL("row summing to 0.5 was accepted");
    } catch (const PredictionFormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("u9") != std::string::npos);
        CHECK(msg.find("0.5") != std::string::npos);
    }
}

TEST_CASE("external predictions: header and id errors") {
    CHECK_THROWS_WITH_AS(parse_predictions_csv("id,joy,bliss,neutral\nu1,1,0,0\n", kJAN, "m"), Contains("bliss"),
                         PredictionFormatError);
    CHECK_THROWS_WITH_AS(parse_predictions_csv("id,joy,neutral\nu1,1,0\n", kJAN, "m"), Contains("anger"),
                         PredictionFormatError);
    CHECK_THROWS_WITH_AS(parse_predictions_csv("id,joy,anger,neutral\nu1,1,0,0\nu1,0,1,0\n", kJAN, "m"),
                         Contains("u1"), PredictionFormatError);
}

TEST_CASE("prediction CSV and model JSON round trips") {
    Xorshift64Star rng(8);
    auto m = random_model(3, 4, rng);
    m.label_set = kJAN;
    m.scaler = Standardizer{{0.1, 0.2, 0.3, 0.4}, {1.0, 2.0, 0.5, 1e-3}};
    m.loss_trace = {1.1, 0.9, 0.1 + 0.2};
    m.config_hash = "abc";
    CHECK(model_from_json(model_to_json(m)) == m);

    std::map<std::string, FeatureVector> feats{{"x", {1, 2, 3, 4}}, {"y", {-1, 0.5, 0, 2}}};
    auto t = predict_table(m, feats, "text");
    testutil::TempDir dir;
    write_predictions(t, dir / "p.csv");
    const auto back = load_external_predictions(dir / "p.csv", kJAN);
    CHECK(back.rows == t.rows);
    CHECK(back.model_name == "text");
    CHECK(back.timing_seconds == t.timing_seconds);

    save_model(m, dir / "m.json");
    CHECK(load_model(dir / "m.json") == m);
    CHECK_THROWS_AS(model_from_json(R"({"format":"ercfuse-model/9"})"), SchemaError);
}
