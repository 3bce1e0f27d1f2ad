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

#include "vscope/metrics.hpp"
#include "vscope/random.hpp"

namespace vscope {
namespace {

std::vector<VisemeLabel> labels(std::initializer_list<const char*> xs) {
    std::vector<VisemeLabel> out;
    for (const char* x : xs) out.emplace_back(x);
    return out;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

const auto kFwp = labels({"F", "W", "P"});

TEST(Confusion, HandTalliedSixPairs) {
    const auto cm = confusion(labels({"F", "F", "F", "W", "W", "P"}), labels({"F", "F", "W", "W", "P", "P"}), kFwp);
    EXPECT_EQ(cm.counts, (Matrix<std::size_t>(3, 3, {2, 1, 0, 0, 1, 1, 0, 0, 1})));
    EXPECT_EQ(cm.total(), 6u);
    EXPECT_EQ(cm.trace(), 4u);
}

TEST(Confusion, PerfectAndConstantPredictions) {
    const auto truth = labels({"F", "W", "P", "P", "W"});
    const auto perfect = confusion(truth, truth, kFwp);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            if (i != j) EXPECT_EQ(perfect.counts(i, j), 0u);
    const auto constant = confusion(truth, labels({"W", "W", "W", "W", "W"}), kFwp);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(constant.counts(i, 0), 0u);
        EXPECT_EQ(constant.counts(i, 2), 0u);
    }
    EXPECT_EQ(code_of([&] { confusion(truth, labels({"F"}), kFwp); }), ErrorCode::LengthMismatch);
    EXPECT_EQ(code_of([&] { confusion(labels({"K"}), labels({"F"}), kFwp); }), ErrorCode::UnknownLabel);
}

TEST(PerClassF1, HandComputedFixture) {
    const auto r = per_class_f1(
        confusion(labels({"F", "F", "F", "W", "W", "P"}), labels({"F", "F", "W", "W", "P", "P"}), kFwp));
    // F: tp 2, predicted 2, true 3. W: 1, 2, 2. P: 1, 2, 1.
    EXPECT_NEAR(r.per_class[0].precision, 1.0, 1e-12);
    EXPECT_NEAR(r.per_class[0].recall, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(r.per_class[0].f1, 0.8, 1e-12);
    EXPECT_NEAR(r.per_class[1].precision, 0.5, 1e-12);
    EXPECT_NEAR(r.per_class[1].recall, 0.5, 1e-12);
    EXPECT_NEAR(r.per_class[1].f1, 0.5, 1e-12);
    EXPECT_NEAR(r.per_class[2].precision, 0.5, 1e-12);
    EXPECT_NEAR(r.per_class[2].recall, 1.0, 1e-12);
    EXPECT_NEAR(r.per_class[2].f1, 2.0 / 3.0, 1e-12);
    EXPECT_EQ(r.per_class[0].support, 3u);
    EXPECT_NEAR(r.accuracy, 4.0 / 6.0, 1e-12);
    EXPECT_NEAR(r.macro_f1, (0.8 + 0.5 + 2.0 / 3.0) / 3.0, 1e-12);
    EXPECT_NEAR(micro_recall(r), r.accuracy, 1e-12);
    EXPECT_TRUE(r.warnings.empty());
}

TEST(PerClassF1, EightTwoFour) {
    ConfusionMatrix cm{labels({"K", "T"}), Matrix<std::size_t>(2, 2, {8, 4, 2, 5})};
    const auto r = per_class_f1(cm);
    EXPECT_NEAR(r.per_class[0].precision, 0.8, 1e-12);
    EXPECT_NEAR(r.per_class[0].recall, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(r.per_class[0].f1, 8.0 / 11.0, 1e-12);
    EXPECT_NEAR(r.per_class[1].precision, 5.0 / 9.0, 1e-12);
    EXPECT_NEAR(r.per_class[1].recall, 5.0 / 7.0, 1e-12);
    EXPECT_NEAR(r.accuracy, 13.0 / 19.0, 1e-12);
    EXPECT_NEAR(micro_recall(r), r.accuracy, 1e-12);
}

TEST(PerClassF1, DiagonalAndAbsentClasses) {
    ConfusionMatrix diag{kFwp, Matrix<std::size_t>(3, 3, {4, 0, 0, 0, 7, 0, 0, 0, 1})};
    for (const auto& m : per_class_f1(diag).per_class) EXPECT_EQ(m.f1, 1.0);

    ConfusionMatrix absent{kFwp, Matrix<std::size_t>(3, 3, {3, 1, 0, 2, 2, 0, 0, 0, 0})};
    const auto r = per_class_f1(absent);
    EXPECT_EQ(r.per_class[2].f1, 0.0);
    EXPECT_EQ(r.per_class[2].support, 0u);
    EXPECT_EQ(r.warnings.size(), 2u);  // never predicted, zero support
    EXPECT_NEAR(r.macro_f1, (r.per_class[0].f1 + r.per_class[1].f1) / 2.0, 1e-15);
    EXPECT_EQ(f1_score(0.0, 0.0), 0.0);
}

TEST(AccuracyIsMicroRecall, RandomConfusions) {
    Rng rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t c = 1 + rng.below(14);
        const auto all = lee_map().visemes();
        std::vector<VisemeLabel> idx(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(c));
        ConfusionMatrix cm{idx, Matrix<std::size_t>(c, c, 0)};
        for (auto& v : cm.counts.data()) v = rng.below(5) == 0 ? 0 : rng.below(50);
        if (cm.total() == 0) continue;
        const auto r = per_class_f1(cm);
        EXPECT_NEAR(micro_recall(r), r.accuracy, 1e-12);
        for (const auto& m : r.per_class) {
            EXPECT_GE(m.f1, 0.0);
            EXPECT_LE(m.f1, 1.0);
            EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-15);
            EXPECT_GE(m.f1, std::min(m.precision, m.recall) - 1e-15);
        }
    }
}

TEST(ConditionDelta, IdentityAndAverage) {
    ConfusionMatrix weak{kFwp, Matrix<std::size_t>(3, 3, {3, 1, 0, 2, 2, 0, 0, 1, 3})};
    ConfusionMatrix strong{kFwp, Matrix<std::size_t>(3, 3, {4, 0, 0, 1, 3, 0, 0, 0, 4})};
    const auto a = evaluation_report(weak, "video-only", 3);
    const auto b = evaluation_report(strong, "clean-av", 3);
    for (const auto& [v, d] : condition_delta(a, a)) EXPECT_EQ(d, 0.0);
    const auto d = condition_delta(a, b);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(d[c].second, b.per_class[c].f1 - a.per_class[c].f1, 1e-15);

    auto a2 = evaluation_report(weak, "video-only", 4);
    auto b2 = evaluation_report(weak, "clean-av", 4);
    const auto mean = mean_condition_delta({a, a2}, {b, b2});
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(mean[c].second, d[c].second / 2.0, 1e-15);
    EXPECT_EQ(code_of([&] { condition_delta(a, a2); }), ErrorCode::ClassIndexMismatch);
}

TEST(EvalReportJson, RoundTripRebuildsMetrics) {
    ConfusionMatrix cm{kFwp, Matrix<std::size_t>(3, 3, {3, 1, 0, 2, 2, 0, 0, 0, 0})};
    const auto r = evaluation_report(cm, "noisy-av", 7);
    const auto j = to_json(r);
    EXPECT_EQ(j["per_class"]["F"]["support"], 4);
    const auto back = eval_report_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.condition, "noisy-av");
    EXPECT_EQ(back.layer, 7);
    EXPECT_EQ(back.accuracy, r.accuracy);
    EXPECT_EQ(back.warnings, r.warnings);
    EXPECT_EQ(to_json(back).dump(), j.dump());
}

TEST(F1ByLayer, Rows) {
    ConfusionMatrix cm{labels({"K", "T"}), Matrix<std::size_t>(2, 2, {8, 4, 2, 5})};
    const auto rows = f1_by_layer_rows(evaluation_report(cm, "clean-av", 11));
    EXPECT_EQ(rows.substr(0, rows.find('\n')), "clean-av,11,K,0.8,0.6666666666666666,0.7272727272727272,12");
}

}  // namespace
}  // namespace vscope
