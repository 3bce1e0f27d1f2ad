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

#include <regex>
#include <set>

#include "vscope/report.hpp"

namespace vscope {
namespace {

std::size_t count_of(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) ++n;
    return n;
}

std::size_t csv_rows(const std::string& csv) { return count_of(csv, "\n") - 1; }

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

FeatureDataset dataset_with(const std::map<std::string, std::size_t>& counts) {
    FeatureDataset ds;
    for (const auto& [v, n] : counts) {
        for (std::size_t i = 0; i < n; ++i) {
            FeatureRecord r;
            r.viseme = VisemeLabel(v);
            r.phoneme = lee_map().phonemes_of(VisemeLabel(v)).front();
            r.vector = {0.0};
            ds.add(r);
        }
    }
    return ds;
}

PlotSpec spec_of(PlotKind kind) {
    PlotSpec s;
    s.kind = kind;
    s.palette = default_palette();
    return s;
}

TEST(Palette, CoversLeeMapWithDistinctColors) {
    const auto p = default_palette();
    EXPECT_EQ(p.size(), 14u);
    std::set<std::string> colors;
    for (const auto& [v, c] : p) colors.insert(c);
    EXPECT_EQ(colors.size(), 14u);
    EXPECT_EQ(plot_basename("scatter", "clean-av", "11"), "scatter_clean-av_11");
}

TEST(Histogram, EmptyDatasetHasAxesAndNoRows) {
    const auto out = emit_histogram(FeatureDataset{}, spec_of(PlotKind::Histogram));
    EXPECT_EQ(out.csv, "viseme,count\n");
    EXPECT_EQ(out.glyphs, 0u);
    EXPECT_EQ(count_of(out.svg, "<line"), 2u);
    EXPECT_EQ(count_of(out.svg, "class=\"bar\""), 0u);
}

TEST(Histogram, BalancedBarsAreEqual) {
    std::map<std::string, std::size_t> counts;
    for (const auto& v : lee_map().visemes()) counts[v.str()] = 500;
    const auto out = emit_histogram(dataset_with(counts), spec_of(PlotKind::Histogram));
    EXPECT_EQ(out.glyphs, 14u);
    std::regex height("class=\"bar\"[^>]* height=\"([0-9.]+)\"");
    std::set<std::string> heights;
    for (auto it = std::sregex_iterator(out.svg.begin(), out.svg.end(), height); it != std::sregex_iterator(); ++it)
        heights.insert((*it)[1]);
    EXPECT_EQ(heights.size(), 1u);
    EXPECT_EQ(count_of(out.csv, ",500\n"), 14u);
}

TEST(Histogram, ErBarCarriesItsCount) {
    const auto out = emit_histogram(dataset_with({{"ER", 739}, {"K", 120}, {"F", 120}}), spec_of(PlotKind::Histogram));
    EXPECT_EQ(out.csv, "viseme,count\nER,739\nF,120\nK,120\n");
    EXPECT_NE(out.svg.find(">739</text>"), std::string::npos);
    auto partial = spec_of(PlotKind::Histogram);
    partial.palette.erase("ER");
    EXPECT_EQ(code_of([&] { emit_histogram(dataset_with({{"ER", 1}}), partial); }), ErrorCode::PaletteIncomplete);
}

TEST(Scatter, GlyphAndLegendCounts) {
    const MatrixD coords(3, 2, {0.0, 0.0, 1.0, 2.0, -1.5, 0.5});
    const std::vector<ScatterLabel> labels{{VisemeLabel("F"), PhonemeLabel("f")},
                                           {VisemeLabel("K"), PhonemeLabel("k")},
                                           {VisemeLabel("F"), PhonemeLabel("f")}};
    const auto out = emit_scatter(coords, labels, spec_of(PlotKind::Scatter));
    EXPECT_EQ(out.glyphs, 3u);
    EXPECT_EQ(count_of(out.svg, "class=\"pt\""), 3u);
    EXPECT_EQ(count_of(out.svg, "class=\"legend-color\""), 2u);
    EXPECT_EQ(out.csv, "record_index,viseme,phoneme,x,y\n0,F,f,0,0\n1,K,k,1,2\n2,F,f,-1.5,0.5\n");
}

TEST(Scatter, PhonemesOfOneVisemeShareColorButNotShape) {
    const MatrixD coords(2, 2, {0.0, 0.0, 1.0, 1.0});
    const std::vector<ScatterLabel> labels{{VisemeLabel("F"), PhonemeLabel("f")}, {VisemeLabel("F"), PhonemeLabel("v")}};
    const auto out = emit_scatter(coords, labels, spec_of(PlotKind::Scatter));
    const std::string color = default_palette().at("F");
    std::regex glyph("<(\\w+) class=\"pt\"[^>]*?(fill|stroke)=\"(#[0-9a-f]{6})\"");
    std::set<std::string> shapes, colors;
    for (auto it = std::sregex_iterator(out.svg.begin(), out.svg.end(), glyph); it != std::sregex_iterator(); ++it) {
        shapes.insert((*it)[1]);
        colors.insert((*it)[3]);
    }
    EXPECT_EQ(shapes.size(), 2u);
    EXPECT_EQ(colors, std::set<std::string>{color});
}

TEST(Scatter, MissingPaletteEntryAndMisalignedInput) {
    auto spec = spec_of(PlotKind::Scatter);
    spec.palette.erase("K");
    const std::vector<ScatterLabel> labels{{VisemeLabel("K"), PhonemeLabel("k")}};
    EXPECT_EQ(code_of([&] { emit_scatter(MatrixD(1, 2), labels, spec); }), ErrorCode::PaletteIncomplete);
    EXPECT_EQ(code_of([&] { emit_scatter(MatrixD(2, 2), labels, spec_of(PlotKind::Scatter)); }), ErrorCode::LengthMismatch);
}

TEST(Scatter, OutputIsDeterministic) {
    Rng rng(1);
    MatrixD coords(200, 2);
    for (auto& v : coords.data()) v = rng.normal() * 30;
    std::vector<ScatterLabel> labels;
    const auto map = lee_map();
    for (std::size_t i = 0; i < 200; ++i) {
        const auto& e = map.entries()[i % map.entries().size()];
        labels.push_back({e.second, e.first});
    }
    const auto a = emit_scatter(coords, labels, spec_of(PlotKind::Scatter));
    const auto b = emit_scatter(coords, labels, spec_of(PlotKind::Scatter));
    EXPECT_EQ(a.svg, b.svg);
    EXPECT_EQ(a.csv, b.csv);
    EXPECT_EQ(csv_rows(a.csv), 200u);
}

EvalReport report_for(const std::string& condition, int layer, double hit_rate) {
    const auto idx = lee_map().visemes();
    ConfusionMatrix cm{idx, Matrix<std::size_t>(idx.size(), idx.size(), 0)};
    const auto hits = static_cast<std::size_t>(hit_rate * 100);
    for (std::size_t c = 0; c < idx.size(); ++c) {
        cm.counts(c, c) = hits;
        cm.counts(c, (c + 1) % idx.size()) = 100 - hits;
    }
    return evaluation_report(cm, condition, layer);
}

TEST(LayerCurves, AccuracyModeOnePolylinePerCondition) {
    std::vector<EvalReport> reports;
    for (const std::string c : {"video-only", "noisy-av", "clean-av"})
        for (int l = 1; l <= 12; ++l) reports.push_back(report_for(c, l, 0.5 + 0.03 * l));
    const auto out = emit_layer_curves(reports, CurveMetric::Accuracy, spec_of(PlotKind::Line));
    EXPECT_EQ(count_of(out.svg, "<polyline"), 3u);
    EXPECT_EQ(out.glyphs, 36u);
    EXPECT_EQ(csv_rows(out.csv), 36u);
    EXPECT_TRUE(out.warnings.empty());
    std::regex poly("<polyline[^>]*points=\"([^\"]*)\"");
    for (auto it = std::sregex_iterator(out.svg.begin(), out.svg.end(), poly); it != std::sregex_iterator(); ++it)
        EXPECT_EQ(count_of((*it)[1].str(), ",") , 12u);
}

TEST(LayerCurves, F1ModeRestrictedToTwoVisemes) {
    std::vector<EvalReport> reports;
    for (const std::string c : {"video-only", "noisy-av", "clean-av"})
        for (int l = 1; l <= 12; ++l) reports.push_back(report_for(c, l, 0.6));
    const auto out = emit_layer_curves(reports, CurveMetric::F1, spec_of(PlotKind::Line), {"F", "ER"});
    EXPECT_EQ(count_of(out.svg, "<polyline"), 6u);
    EXPECT_EQ(csv_rows(out.csv), 72u);
}

TEST(LayerCurves, SparseLayersWarn) {
    const auto one = emit_layer_curves({report_for("clean-av", 11, 0.9)}, CurveMetric::Accuracy, spec_of(PlotKind::Line));
    EXPECT_EQ(one.glyphs, 1u);
    ASSERT_EQ(one.warnings.size(), 1u);
    EXPECT_EQ(one.warnings[0].rfind("SparseLayers", 0), 0u);
    const auto gap = emit_layer_curves({report_for("clean-av", 1, 0.9), report_for("clean-av", 5, 0.9)},
                                       CurveMetric::Accuracy, spec_of(PlotKind::Line));
    EXPECT_EQ(gap.warnings.size(), 1u);
}

TEST(Svg, EscapesText) {
    EXPECT_EQ(svg::escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    EXPECT_EQ(svg::num(1.005), "1.00");
    EXPECT_EQ(svg::num(-0.125), "-0.12");
}

}  // namespace
}  // namespace vscope
