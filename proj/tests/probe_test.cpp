// Copyright 2026 The vscope Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vscope/probe.hpp"
#include "vscope/synthetic.hpp"

namespace vscope {
namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

MatrixD random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    MatrixD m(r, c);
    for (auto& v : m.data()) v = scale * rng.normal();
    return m;
}

ProbeModel random_model(std::size_t d, std::size_t h, std::size_t c, Rng& rng) {
    auto m = ProbeModel::zeros(d, h, c);
    m.w1 = random_matrix(d, h, rng);
    m.w2 = random_matrix(h, c, rng);
    for (auto& v : m.b1) v = rng.normal();
    for (auto& v : m.b2) v = rng.normal();
    return m;
}

std::vector<VisemeLabel> lee_classes() { return lee_map().visemes(); }

FeatureDataset synthetic_dataset(std::size_t per_class, double separation, std::uint64_t seed) {
    SynthSpec spec;
    spec.tokens_per_class = per_class;
    spec.conditions = {{"clean-av", separation, 0.0, 1.0}};
    spec.seed = seed;
    auto corpus = generate_synthetic_corpus(spec);
    return build_dataset(corpus.provider(), corpus.segments, lee_map(), {"clean-av"}, {0}).dataset;
}

TEST(ProbeConfig, Validation) {
    ProbeConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.hidden_units = 0;
    EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidConfig);
    cfg = ProbeConfig{};
    cfg.val_fraction = 1.0;
    EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidConfig);
    cfg = ProbeConfig{};
    cfg.patience = 0;
    EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidConfig);
}

TEST(SplitTrainVal, StratifiedAndDeterministic) {
    const auto ds = synthetic_dataset(100, 8.0, 1);
    const auto [train, val] = split_train_val(ds, 0.1, 7);
    for (const auto& [v, n] : train.class_counts()) EXPECT_EQ(n, 90u) << v;
    for (const auto& [v, n] : val.class_counts()) EXPECT_EQ(n, 10u) << v;
    const auto again = split_train_val(ds, 0.1, 7);
    EXPECT_TRUE(again.first == train);
    EXPECT_TRUE(again.second == val);
    EXPECT_FALSE(split_train_val(ds, 0.1, 8).second == val);

    FeatureDataset tiny;
    FeatureRecord r;
    r.viseme = VisemeLabel("K");
    r.phoneme = PhonemeLabel("k");
    r.vector = {1.0};
    tiny.add(r);
    EXPECT_EQ(code_of([&] { split_train_val(tiny, 0.1, 0); }), ErrorCode::ClassTooSmall);
}

TEST(Forward, ZeroModelIsUniform) {
    const auto m = ProbeModel::zeros(5, 4, 14);
    Rng rng(1);
    const auto x = random_matrix(3, 5, rng);
    const auto c = forward(m, x);
    for (double v : c.logits.data()) EXPECT_EQ(v, 0.0);
    const std::vector<int> y{0, 5, 13};
    EXPECT_NEAR(cross_entropy(c.logits, y).loss, std::log(14.0), 1e-15);
}

TEST(Forward, ZeroInputGivesBiasPath) {
    Rng rng(2);
    const auto m = random_model(4, 6, 3, rng);
    const auto c = forward(m, MatrixD(2, 4));
    for (std::size_t k = 0; k < 3; ++k) {
        double expect = m.b2[k];
        for (std::size_t h = 0; h < 6; ++h) expect += std::max(0.0, m.b1[h]) * m.w2(h, k);
        EXPECT_NEAR(c.logits(0, k), expect, 1e-14);
        EXPECT_EQ(c.logits(0, k), c.logits(1, k));
    }
}

TEST(Forward, MatchesHandMultipliedNetwork) {
    // 4 -> 2 -> 2 network, 3 inputs.
    auto m = ProbeModel::zeros(4, 2, 2);
    m.w1 = MatrixD(4, 2, {0.5, -1.0, 0.25, 2.0, -0.75, 0.5, 1.0, -0.25});
    m.b1 = {0.1, -0.2};
    m.w2 = MatrixD(2, 2, {1.5, -0.5, -2.0, 0.75});
    m.b2 = {0.05, -0.05};
    const MatrixD x(3, 4, {1, 2, 3, 4, -1, 0.5, 0, 2, 0.3, -0.7, 1.1, 0});
    const auto c = forward(m, x);
    for (std::size_t i = 0; i < 3; ++i) {
        double h[2];
        for (std::size_t j = 0; j < 2; ++j) {
            double s = m.b1[j];
            for (std::size_t d = 0; d < 4; ++d) s += x(i, d) * m.w1(d, j);
            h[j] = s > 0 ? s : 0;
        }
        for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(c.logits(i, k), m.b2[k] + h[0] * m.w2(0, k) + h[1] * m.w2(1, k), 1e-14);
    }
    EXPECT_NEAR(c.hidden(0, 0), 2.85, 1e-14);
    EXPECT_NEAR(c.hidden(1, 1), 1.3, 1e-14);
    EXPECT_EQ(c.hidden(2, 0), 0.0);  // pre-activation -0.75
}

TEST(CrossEntropy, LimitsAndFiniteDifferences) {
    MatrixD sharp(1, 3, {100.0, 0.0, 0.0});
    EXPECT_LT(cross_entropy(sharp, std::vector<int>{0}).loss, 1e-40);
    EXPECT_TRUE(std::isfinite(cross_entropy(MatrixD(1, 2, {1e6, -1e6}), std::vector<int>{1}).loss));

    Rng rng(3);
    auto logits = random_matrix(5, 14, rng, 2.0);
    const std::vector<int> y{0, 3, 13, 7, 7};
    const auto lg = cross_entropy(logits, y);
    const double eps = 1e-4;
    double worst = 0.0;
    for (std::size_t e = 0; e < logits.data().size(); ++e) {
        const double keep = logits.data()[e];
        logits.data()[e] = keep + eps;
        const double up = cross_entropy(logits, y).loss;
        logits.data()[e] = keep - eps;
        const double down = cross_entropy(logits, y).loss;
        logits.data()[e] = keep;
        worst = std::max(worst, std::abs((up - down) / (2 * eps) - lg.dlogits.data()[e]));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(CrossEntropy, ShiftInvariantPerRow) {
    Rng rng(31);
    const auto logits = random_matrix(6, 14, rng, 3.0);
    const std::vector<int> y{1, 4, 4, 0, 13, 9};
    auto shifted = logits;
    for (std::size_t i = 0; i < shifted.rows(); ++i) {
        const double c = 50.0 * static_cast<double>(i) - 120.0;
        for (std::size_t j = 0; j < shifted.cols(); ++j) shifted(i, j) += c;
    }
    const auto a = cross_entropy(logits, y);
    const auto b = cross_entropy(shifted, y);
    EXPECT_NEAR(a.loss, b.loss, 1e-9);
    for (std::size_t e = 0; e < a.dlogits.data().size(); ++e) EXPECT_NEAR(a.dlogits.data()[e], b.dlogits.data()[e], 1e-9);
}

TEST(Backward, MatchesCentralDifferences) {
    Rng rng(4);
    const double eps = 1e-4;
    for (int draw = 0; draw < 20; ++draw) {
        auto m = random_model(6, 5, 3, rng);
        const auto x = random_matrix(7, 6, rng);
        std::vector<int> y(7);
        for (auto& v : y) v = static_cast<int>(rng.below(3));
        const auto cache = forward(m, x);
        const auto g = backward(m, x, cache, cross_entropy(cache.logits, y).dlogits);
        auto loss = [&] { return cross_entropy(forward(m, x).logits, y).loss; };
        auto check = [&](std::span<double> params, std::span<const double> grads) {
            double diff = 0.0, num_norm = 0.0, an_norm = 0.0;
            for (std::size_t e = 0; e < params.size(); ++e) {
                const double keep = params[e];
                params[e] = keep + eps;
                const double up = loss();
                params[e] = keep - eps;
                const double down = loss();
                params[e] = keep;
                const double numeric = (up - down) / (2 * eps);
                diff += (numeric - grads[e]) * (numeric - grads[e]);
                num_norm += numeric * numeric;
                an_norm += grads[e] * grads[e];
            }
            // Relative L2 error over the whole tensor; single entries with
            // gradients near 1e-8 sit at the finite-difference noise floor.
            EXPECT_LT(std::sqrt(diff / std::max({num_norm, an_norm, 1e-300})), 1e-5) << "draw " << draw;
        };
        check(m.w1.data(), g.w1.data());
        check(m.b1, g.b1);
        check(m.w2.data(), g.w2.data());
        check(m.b2, g.b2);
    }
}

TEST(Adam, ZeroGradientLeavesParameters) {
    std::vector<double> p{1.0, -2.0}, g{0.0, 0.0}, m(2), v(2);
    for (long t = 1; t <= 5; ++t) adam_step(p, g, m, v, t, AdamSettings{});
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, ConstantGradientStepsAtLearningRate) {
    std::vector<double> p{0.0, 0.0}, g{3.0, -0.02}, m(2), v(2);
    AdamSettings s;
    s.learning_rate = 0.01;
    std::vector<double> prev = p;
    for (long t = 1; t <= 2000; ++t) {
        prev = p;
        adam_step(p, g, m, v, t, s);
    }
    EXPECT_NEAR(p[0] - prev[0], -0.01, 1e-8);
    EXPECT_NEAR(p[1] - prev[1], 0.01, 1e-6);
}

TEST(Adam, ThreeHandIteratedSteps) {
    std::vector<double> p{1.0}, m(1), v(1);
    AdamSettings s;
    s.learning_rate = 0.1;
    const double grads[] = {0.5, -0.2, 0.1};
    const double expect[] = {0.900000002, 0.8654394181165108, 0.8275002408356956};
    for (long t = 1; t <= 3; ++t) {
        std::vector<double> g{grads[t - 1]};
        adam_step(p, g, m, v, t, s);
        EXPECT_NEAR(p[0], expect[t - 1], 1e-15);
    }
}

TEST(EarlyStopping, RuleTrace) {
    EarlyStopping s(1);
    EXPECT_FALSE(s.observe(1, 0.5));
    EXPECT_TRUE(s.observe(2, 0.6));
    EXPECT_EQ(s.best_epoch(), 1);

    EarlyStopping t(3);
    EXPECT_FALSE(t.observe(1, 1.0));
    EXPECT_FALSE(t.observe(2, 0.9));
    EXPECT_FALSE(t.observe(3, 0.9));  // ties do not count as improvement
    EXPECT_FALSE(t.observe(4, 0.95));
    EXPECT_TRUE(t.observe(5, 0.91));
    EXPECT_EQ(t.best_epoch(), 2);
}

TEST(TrainProbe, WorseningValidationStopsAfterPatience) {
    // Validation labels are the opposite of training labels, so fitting the
    // training set raises validation loss from the first epoch on.
    Rng rng(5);
    LabeledData train{random_matrix(40, 3, rng), {}};
    for (std::size_t i = 0; i < 40; ++i) train.y.push_back(train.x(i, 0) > 0 ? 1 : 0);
    LabeledData val{train.x, {}};
    for (int y : train.y) val.y.push_back(1 - y);
    ProbeConfig cfg;
    cfg.classes = 2;
    cfg.hidden_units = 8;
    cfg.patience = 1;
    cfg.learning_rate = 0.05;
    const auto [model, trace] = train_probe(train, val, cfg, {VisemeLabel("F"), VisemeLabel("K")});
    EXPECT_TRUE(trace.stopped_early);
    EXPECT_EQ(trace.best_epoch, 1);
    EXPECT_EQ(trace.epochs.size(), 2u);
}

TEST(TrainProbe, StopsWithinPatienceOfBestEpoch) {
    Rng rng(8);
    LabeledData train{random_matrix(120, 6, rng), {}};
    LabeledData val{random_matrix(40, 6, rng), {}};
    for (std::size_t i = 0; i < 120; ++i) train.y.push_back(static_cast<int>(rng.below(3)));
    for (std::size_t i = 0; i < 40; ++i) val.y.push_back(static_cast<int>(rng.below(3)));
    for (int patience : {1, 3, 7}) {
        ProbeConfig cfg;
        cfg.input_dim = 6;
        cfg.classes = 3;
        cfg.hidden_units = 16;
        cfg.learning_rate = 0.02;
        cfg.batch_size = 16;
        cfg.patience = patience;
        const auto [model, trace] = train_probe(train, val, cfg, {VisemeLabel("F"), VisemeLabel("K"), VisemeLabel("T")});
        ASSERT_TRUE(trace.stopped_early) << patience;
        EXPECT_EQ(static_cast<int>(trace.epochs.size()) - trace.best_epoch, patience);
        double best = 1e300;
        for (const auto& e : trace.epochs) best = std::min(best, e.val_loss);
        EXPECT_EQ(trace.epochs[static_cast<std::size_t>(trace.best_epoch - 1)].val_loss, best);
    }
}

TEST(TrainProbe, MemorizesSixtyFourSamples) {
    Rng rng(6);
    LabeledData data{random_matrix(64, 16, rng), {}};
    for (int i = 0; i < 64; ++i) data.y.push_back(i % 14);
    ProbeConfig cfg;
    cfg.input_dim = 16;
    cfg.learning_rate = 0.01;
    cfg.batch_size = 16;
    cfg.patience = 200;
    const auto [model, trace] = train_probe(data, data, cfg, lee_classes());
    double best = 1e9;
    for (const auto& e : trace.epochs) best = std::min(best, e.train_loss);
    EXPECT_LT(best, 0.01);
    EXPECT_EQ(evaluate(model, data).accuracy, 1.0);
}

TEST(TrainProbe, SeparableCorpusReachesFullValidationAccuracy) {
    const auto ds = synthetic_dataset(50, 12.0, 7);
    const auto all = to_labeled(ds, lee_classes());
    oracle::Dense x(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) x[i].assign(all.x.row(i).begin(), all.x.row(i).end());
    ASSERT_EQ(oracle::nearest_centroid_accuracy(x, all.y, 14), 1.0);

    ProbeConfig cfg;
    cfg.input_dim = ds.dim();
    const auto [train, val] = split_train_val(ds, cfg.val_fraction, 1);
    const auto [model, trace] = train_probe(to_labeled(train, lee_classes()), to_labeled(val, lee_classes()), cfg,
                                            lee_classes());
    EXPECT_EQ(evaluate(model, to_labeled(val, lee_classes())).accuracy, 1.0);
    double best_val = 1e9;
    for (const auto& e : trace.epochs) best_val = std::min(best_val, e.val_loss);
    EXPECT_EQ(trace.epochs[static_cast<std::size_t>(trace.best_epoch - 1)].val_loss, best_val);
}

TEST(TrainProbe, ShuffledLabelsStayNearChance) {
    double mean_acc = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto ds = synthetic_dataset(60, 8.0, 20 + seed);
        auto labeled = to_labeled(ds, lee_classes());
        Rng rng(derive_seed(seed, "labels"));
        rng.shuffle(std::span<int>(labeled.y));
        const std::size_t n_val = labeled.size() / 5;
        LabeledData train{MatrixD(labeled.size() - n_val, labeled.x.cols()), {}};
        LabeledData val{MatrixD(n_val, labeled.x.cols()), {}};
        for (std::size_t i = 0; i < labeled.size(); ++i) {
            auto& dst = i < n_val ? val : train;
            const std::size_t row = i < n_val ? i : i - n_val;
            std::copy(labeled.x.row(i).begin(), labeled.x.row(i).end(), dst.x.row(row).begin());
            dst.y.push_back(labeled.y[i]);
        }
        ProbeConfig cfg;
        cfg.input_dim = ds.dim();
        cfg.seed = seed;
        const auto [model, trace] = train_probe(train, val, cfg, lee_classes());
        mean_acc += evaluate(model, val).accuracy / 5.0;
    }
    EXPECT_NEAR(mean_acc, 1.0 / 14.0, 0.05);
}

TEST(TrainProbe, DeterministicForSeed) {
    const auto ds = synthetic_dataset(10, 4.0, 8);
    ProbeConfig cfg;
    cfg.input_dim = ds.dim();
    cfg.max_epochs = 5;
    const auto [train, val] = split_train_val(ds, 0.2, 1);
    const auto a = train_probe(to_labeled(train, lee_classes()), to_labeled(val, lee_classes()), cfg, lee_classes());
    const auto b = train_probe(to_labeled(train, lee_classes()), to_labeled(val, lee_classes()), cfg, lee_classes());
    EXPECT_TRUE(a.first == b.first);
    EXPECT_EQ(serialize_training_log(a.second), serialize_training_log(b.second));
    cfg.seed = 1;
    const auto c = train_probe(to_labeled(train, lee_classes()), to_labeled(val, lee_classes()), cfg, lee_classes());
    EXPECT_FALSE(a.first == c.first);
}

TEST(TrainProbe, RejectsMismatchedClassIndex) {
    LabeledData d{MatrixD(4, 2, 1.0), {0, 1, 0, 1}};
    ProbeConfig cfg;
    EXPECT_EQ(code_of([&] { train_probe(d, d, cfg, {VisemeLabel("F")}); }), ErrorCode::ClassIndexMismatch);
    cfg.classes = 2;
    d.y[0] = 5;
    EXPECT_EQ(code_of([&] { train_probe(d, d, cfg, {VisemeLabel("F"), VisemeLabel("K")}); }), ErrorCode::UnknownLabel);
}

TEST(Predict, TiesShiftsAndOneHot) {
    auto m = ProbeModel::zeros(2, 1, 3);
    m.class_index = {VisemeLabel("F"), VisemeLabel("W"), VisemeLabel("P")};
    EXPECT_EQ(predict(m, MatrixD(1, 2)).at(0).str(), "F");
    m.b2 = {0.0, 0.0, 5.0};
    EXPECT_EQ(predict(m, MatrixD(1, 2)).at(0).str(), "P");
    m.b2 = {100.0, 100.0, 105.0};
    EXPECT_EQ(predict(m, MatrixD(1, 2)).at(0).str(), "P");
    EXPECT_EQ(argmax_rows(MatrixD(1, 3, {2.0, 7.0, 7.0})), (std::vector<int>{1}));
}

TEST(ModelFile, RoundTripsAtSinglePrecision) {
    Rng rng(9);
    auto m = random_model(5, 4, 3, rng);
    m.class_index = {VisemeLabel("F"), VisemeLabel("W"), VisemeLabel("P")};
    m.input_mean = {1, 2, 3, 4, 5};
    m.input_scale = {1, 1, 2, 2, 0.5};
    ProbeConfig cfg;
    const auto bytes = serialize_model(m, cfg);
    const auto back = parse_model(bytes);
    EXPECT_EQ(back.class_index, m.class_index);
    EXPECT_EQ(back.input_mean, m.input_mean);
    for (std::size_t e = 0; e < m.w1.data().size(); ++e)
        EXPECT_EQ(back.w1.data()[e], static_cast<double>(static_cast<float>(m.w1.data()[e])));
    EXPECT_EQ(serialize_model(back, cfg), bytes);
    EXPECT_EQ(code_of([&] { parse_model(bytes.substr(0, bytes.size() - 3)); }), ErrorCode::ShapeMismatch);
    EXPECT_EQ(code_of([] { parse_model("{\"format\":\"other\"}\n"); }), ErrorCode::MalformedModel);
}

TEST(TrainingLog, Format) {
    TrainTrace t;
    t.epochs = {{1, 2.5, 2.25, 0.5}, {2, 1.0, 1.5, 0.75}};
    EXPECT_EQ(serialize_training_log(t), "epoch,train_loss,val_loss,val_acc\n1,2.5,2.25,0.5\n2,1,1.5,0.75\n");
}

}  // namespace
}  // namespace vscope
