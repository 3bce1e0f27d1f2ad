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


// Deterministic SVG figures with CSV mirrors: viseme count histograms,
// viseme/phoneme scatter plots and per-layer metric curves. Output contains
// no timestamps, so identical inputs give byte-identical files.

#ifndef VSCOPE_REPORT_HPP
#define VSCOPE_REPORT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vscope/alignment.hpp"
#include "vscope/common.hpp"
#include "vscope/error.hpp"
#include "vscope/features.hpp"
#include "vscope/metrics.hpp"

namespace vscope {

enum class PlotKind { Histogram, Scatter, Line };
enum class Marker { Circle, Square, Triangle, Diamond, Cross, Plus, Star };

inline constexpr std::array<Marker, 7> kMarkerCycle = {Marker::Circle, Marker::Square, Marker::Triangle, Marker::Diamond,
                                                       Marker::Cross,  Marker::Plus,   Marker::Star};

inline constexpr std::array<std::string_view, 14> kPaletteColors = {
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#46f0f0",
    "#f032e6", "#bcf60c", "#fabebe", "#008080", "#9a6324", "#800000", "#808080"};

/// Series colors for conditions in accuracy curves.
inline constexpr std::array<std::string_view, 6> kConditionColors = {"#1f77b4", "#d62728", "#2ca02c",
                                                                      "#9467bd", "#ff7f0e", "#17becf"};

struct PlotSpec {
    PlotKind kind = PlotKind::Scatter;
    std::map<std::string, std::string> palette;  // viseme -> color
    std::vector<Marker> marker_cycle{kMarkerCycle.begin(), kMarkerCycle.end()};
    int width = 960;
    int height = 720;
    std::string title;
    std::string x_label;
    std::string y_label;
};

/// Fixed colors keyed by the map's visemes in order (cycling past 14).
inline std::map<std::string, std::string> default_palette(const VisemeMap& map = lee_map()) {
    std::map<std::string, std::string> p;
    for (std::size_t i = 0; i < map.visemes().size(); ++i) {
        p[map.visemes()[i].str()] = std::string(kPaletteColors[i % kPaletteColors.size()]);
    }
    return p;
}

struct EmittedPlot {
    std::string svg;
    std::string csv;
    std::vector<std::string> warnings;
    std::size_t glyphs = 0;
};

/// `{kind}_{condition}_{layer}`
inline std::string plot_basename(std::string_view kind, std::string_view condition, std::string_view layer) {
    return std::string(kind) + "_" + std::string(condition) + "_" + std::string(layer);
}

namespace svg {

inline std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

inline std::string num(double v) { return format_fixed(v, 2); }

inline std::string open(int width, int height) {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           std::to_string(width) + "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
           " " + std::to_string(height) + "\">\n<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
           std::to_string(height) + "\" fill=\"#ffffff\"/>\n";
}

inline std::string close() { return "</svg>\n"; }

inline std::string text(double x, double y, std::string_view s, std::string_view anchor = "middle", int size = 12,
                        std::string_view extra = "") {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" + std::to_string(size) +
           "\" text-anchor=\"" + std::string(anchor) + "\"" + std::string(extra) + ">" + escape(s) + "</text>\n";
}

inline std::string line(double x1, double y1, double x2, double y2, std::string_view stroke = "#000000") {
    return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) + "\" stroke=\"" +
           std::string(stroke) + "\" stroke-width=\"1\"/>\n";
}

/// One glyph element centered at (x, y) with radius r.
inline std::string marker(Marker m, double x, double y, double r, std::string_view color, std::string_view cls) {
    const std::string attrs = " class=\"" + std::string(cls) + "\"";
    const std::string fill = " fill=\"" + std::string(color) + "\" fill-opacity=\"0.8\"";
    const std::string stroke = " stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" fill=\"none\"";
    auto polygon = [&](const std::vector<std::pair<double, double>>& pts) {
        std::string s = "<polygon" + attrs + " points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i) s += " ";
            s += num(x + pts[i].first) + "," + num(y + pts[i].second);
        }
        return s + "\"" + fill + "/>\n";
    };
    switch (m) {
    case Marker::Circle:
        return "<circle" + attrs + " cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) + "\"" + fill + "/>\n";
    case Marker::Square:
        return "<rect" + attrs + " x=\"" + num(x - r) + "\" y=\"" + num(y - r) + "\" width=\"" + num(2 * r) +
               "\" height=\"" + num(2 * r) + "\"" + fill + "/>\n";
    case Marker::Triangle:
        return polygon({{0, -r}, {r, r}, {-r, r}});
    case Marker::Diamond:
        return polygon({{0, -r}, {r, 0}, {0, r}, {-r, 0}});
    case Marker::Cross:
        return "<path" + attrs + " d=\"M" + num(x - r) + " " + num(y - r) + "L" + num(x + r) + " " + num(y + r) + "M" +
               num(x - r) + " " + num(y + r) + "L" + num(x + r) + " " + num(y - r) + "\"" + stroke + "/>\n";
    case Marker::Plus:
        return "<path" + attrs + " d=\"M" + num(x - r) + " " + num(y) + "L" + num(x + r) + " " + num(y) + "M" + num(x) +
               " " + num(y - r) + "L" + num(x) + " " + num(y + r) + "\"" + stroke + "/>\n";
    case Marker::Star: {
        std::vector<std::pair<double, double>> pts;
        for (int k = 0; k < 10; ++k) {
            const double a = -std::numbers::pi / 2 + k * std::numbers::pi / 5;
            const double rr = (k % 2 == 0) ? r : r * 0.45;
            pts.emplace_back(rr * std::cos(a), rr * std::sin(a));
        }
        return polygon(pts);
    }
    }
    return {};
}

}  // namespace svg

/// One bar per viseme ordered by count (descending, ties by name), each bar
/// labeled with its count. The CSV mirror is `viseme,count`.
inline EmittedPlot emit_histogram(const FeatureDataset& ds, const PlotSpec& spec) {
    std::vector<std::pair<std::string, std::size_t>> bars(ds.class_counts().begin(), ds.class_counts().end());
    std::stable_sort(bars.begin(), bars.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [v, n] : bars) {
        if (!spec.palette.contains(v)) throw Error(ErrorCode::PaletteIncomplete, "no color for viseme '" + v + "'");
    }
    EmittedPlot out;
    out.csv = "viseme,count\n";
    const double left = 70, right = 20, top = 40, bottom = 60;
    const double pw = spec.width - left - right, ph = spec.height - top - bottom;
    std::string s = svg::open(spec.width, spec.height);
    s += svg::text(spec.width / 2.0, 24, spec.title.empty() ? "Tokens per viseme" : spec.title, "middle", 16);
    s += svg::line(left, top, left, top + ph);
    s += svg::line(left, top + ph, left + pw, top + ph);
    s += svg::text(left + pw / 2, spec.height - 12, spec.x_label.empty() ? "viseme" : spec.x_label);
    s += svg::text(18, top + ph / 2, spec.y_label.empty() ? "count" : spec.y_label, "middle", 12,
                   " transform=\"rotate(-90 18 " + svg::num(top + ph / 2) + ")\"");
    std::size_t max_count = 0;
    for (const auto& b : bars) max_count = std::max(max_count, b.second);
    s += svg::text(left - 6, top + 4, std::to_string(max_count), "end", 10);
    s += svg::text(left - 6, top + ph + 4, "0", "end", 10);
    const double slot = bars.empty() ? pw : pw / static_cast<double>(bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto& [v, n] = bars[i];
        const double h = max_count ? ph * static_cast<double>(n) / static_cast<double>(max_count) : 0.0;
        const double x = left + slot * static_cast<double>(i) + slot * 0.1;
        s += "<rect class=\"bar\" x=\"" + svg::num(x) + "\" y=\"" + svg::num(top + ph - h) + "\" width=\"" +
             svg::num(slot * 0.8) + "\" height=\"" + svg::num(h) + "\" fill=\"" + spec.palette.at(v) + "\"/>\n";
        s += svg::text(x + slot * 0.4, top + ph - h - 4, std::to_string(n), "middle", 10);
        s += svg::text(x + slot * 0.4, top + ph + 16, v, "middle", 11);
        out.csv += v + "," + std::to_string(n) + "\n";
    }
    out.glyphs = bars.size();
    s += svg::close();
    out.svg = std::move(s);
    return out;
}

struct ScatterLabel {
    VisemeLabel viseme;
    PhonemeLabel phoneme;
};

/// One glyph per row of `coords`: color from the viseme, marker shape from the
/// phoneme's position among its viseme's phonemes (sorted by symbol). Axes
/// share one scale so the aspect ratio is preserved. The CSV mirror is
/// `record_index,viseme,phoneme,x,y` in data coordinates.
inline EmittedPlot emit_scatter(const MatrixD& coords, const std::vector<ScatterLabel>& labels, const PlotSpec& spec) {
    if (coords.rows() != labels.size() || (coords.rows() > 0 && coords.cols() != 2)) {
        throw Error(ErrorCode::LengthMismatch, "coordinates and labels are not aligned");
    }
    std::vector<std::string> visemes;
    std::map<std::string, std::set<std::string>> phonemes;
    for (const auto& l : labels) {
        if (!spec.palette.contains(l.viseme.str())) {
            throw Error(ErrorCode::PaletteIncomplete, "no color for viseme '" + l.viseme.str() + "'");
        }
        if (std::find(visemes.begin(), visemes.end(), l.viseme.str()) == visemes.end()) visemes.push_back(l.viseme.str());
        phonemes[l.viseme.str()].insert(l.phoneme.str());
    }
    std::sort(visemes.begin(), visemes.end(), [&](const std::string& a, const std::string& b) {
        return std::distance(spec.palette.begin(), spec.palette.find(a)) < std::distance(spec.palette.begin(), spec.palette.find(b));
    });
    std::map<std::pair<std::string, std::string>, Marker> markers;
    for (const auto& [v, ps] : phonemes) {
        std::size_t k = 0;
        for (const auto& p : ps) markers[{v, p}] = spec.marker_cycle[k++ % spec.marker_cycle.size()];
    }

    EmittedPlot out;
    const double legend_w = 170;
    const double left = 30, top = 40, bottom = 30;
    const double pw = spec.width - left - legend_w - 20, ph = spec.height - top - bottom;
    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    if (coords.rows() > 0) {
        min_x = max_x = coords(0, 0);
        min_y = max_y = coords(0, 1);
        for (std::size_t i = 1; i < coords.rows(); ++i) {
            min_x = std::min(min_x, coords(i, 0));
            max_x = std::max(max_x, coords(i, 0));
            min_y = std::min(min_y, coords(i, 1));
            max_y = std::max(max_y, coords(i, 1));
        }
    }
    const double span = std::max({max_x - min_x, max_y - min_y, 1e-12});
    const double scale = std::min(pw, ph) / span;
    const double cx = left + pw / 2, cy = top + ph / 2;
    const double mid_x = (min_x + max_x) / 2, mid_y = (min_y + max_y) / 2;

    std::string s = svg::open(spec.width, spec.height);
    s += svg::text(spec.width / 2.0, 24, spec.title, "middle", 16);
    s += "<rect x=\"" + svg::num(left) + "\" y=\"" + svg::num(top) + "\" width=\"" + svg::num(pw) + "\" height=\"" +
         svg::num(ph) + "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    out.csv = "record_index,viseme,phoneme,x,y\n";
    for (std::size_t i = 0; i < coords.rows(); ++i) {
        const auto& l = labels[i];
        const double x = cx + (coords(i, 0) - mid_x) * scale;
        const double y = cy - (coords(i, 1) - mid_y) * scale;
        s += svg::marker(markers.at({l.viseme.str(), l.phoneme.str()}), x, y, 3.0, spec.palette.at(l.viseme.str()), "pt");
        out.csv += std::to_string(i) + "," + l.viseme.str() + "," + l.phoneme.str() + "," + format_real(coords(i, 0)) + "," +
                   format_real(coords(i, 1)) + "\n";
    }
    out.glyphs = coords.rows();

    // Legend: viseme colors, then the phoneme markers under each.
    double ly = top + 8;
    const double lx = spec.width - legend_w;
    s += "<g class=\"legend\">\n";
    for (const auto& v : visemes) {
        s += "<rect class=\"legend-color\" x=\"" + svg::num(lx) + "\" y=\"" + svg::num(ly - 8) +
             "\" width=\"10\" height=\"10\" fill=\"" + spec.palette.at(v) + "\"/>\n";
        s += svg::text(lx + 16, ly + 1, v, "start", 11);
        double px = lx + 60;
        for (const auto& p : phonemes[v]) {
            s += svg::marker(markers.at({v, p}), px, ly - 3, 3.5, spec.palette.at(v), "legend-marker");
            s += svg::text(px + 6, ly + 1, p, "start", 9);
            px += 30;
            if (px > spec.width - 20) {
                px = lx + 60;
                ly += 12;
            }
        }
        ly += 16;
    }
    s += "</g>\n";
    s += svg::close();
    out.svg = std::move(s);
    return out;
}

enum class CurveMetric { Accuracy, F1 };

/// Accuracy mode: one polyline per condition. F1 mode: one polyline per
/// (condition, viseme), optionally restricted to `visemes`. x is the layer.
/// Layer sets with gaps, or a single layer, add a SparseLayers warning.
inline EmittedPlot emit_layer_curves(const std::vector<EvalReport>& reports, CurveMetric metric, const PlotSpec& spec,
                                     const std::vector<std::string>& visemes = {}) {
    std::vector<std::string> conditions;
    std::map<std::string, std::map<int, const EvalReport*>> by_cond;
    for (const auto& r : reports) {
        if (!by_cond.contains(r.condition)) conditions.push_back(r.condition);
        by_cond[r.condition][r.layer] = &r;
    }
    EmittedPlot out;
    int min_layer = 0, max_layer = 0;
    bool first = true;
    for (const auto& c : conditions) {
        const auto& layers = by_cond[c];
        const int lo = layers.begin()->first, hi = layers.rbegin()->first;
        if (layers.size() == 1 || static_cast<int>(layers.size()) != hi - lo + 1) {
            out.warnings.push_back("SparseLayers: condition " + c + " covers " + std::to_string(layers.size()) +
                                   " layer(s) in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        min_layer = first ? lo : std::min(min_layer, lo);
        max_layer = first ? hi : std::max(max_layer, hi);
        first = false;
    }

    struct Series {
        std::string name;
        std::string color;
        std::string dash;
        std::vector<std::pair<int, double>> points;
    };
    std::vector<Series> series;
    if (metric == CurveMetric::Accuracy) {
        out.csv = "condition,layer,accuracy\n";
        for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
            Series s{conditions[ci], std::string(kConditionColors[ci % kConditionColors.size()]), "", {}};
            for (const auto& [layer, r] : by_cond[conditions[ci]]) {
                s.points.emplace_back(layer, r->accuracy);
                out.csv += conditions[ci] + "," + std::to_string(layer) + "," + format_real(r->accuracy) + "\n";
            }
            series.push_back(std::move(s));
        }
    } else {
        static constexpr std::array<std::string_view, 4> dashes = {"", "6,3", "2,2", "8,3,2,3"};
        out.csv = "condition,viseme,layer,f1\n";
        for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
            const auto& layers = by_cond[conditions[ci]];
            const auto& class_index = layers.begin()->second->class_index;
            for (const auto& v : class_index) {
                if (!visemes.empty() && std::find(visemes.begin(), visemes.end(), v.str()) == visemes.end()) continue;
                auto color = spec.palette.find(v.str());
                if (color == spec.palette.end()) throw Error(ErrorCode::PaletteIncomplete, "no color for viseme '" + v.str() + "'");
                Series s{conditions[ci] + " " + v.str(), color->second, std::string(dashes[ci % dashes.size()]), {}};
                for (const auto& [layer, r] : layers) {
                    const double f1 = r->metrics_of(v).f1;
                    s.points.emplace_back(layer, f1);
                    out.csv += conditions[ci] + "," + v.str() + "," + std::to_string(layer) + "," + format_real(f1) + "\n";
                }
                series.push_back(std::move(s));
            }
        }
    }

    const double left = 60, right = 190, top = 40, bottom = 50;
    const double pw = spec.width - left - right, ph = spec.height - top - bottom;
    const double layer_span = std::max(1, max_layer - min_layer);
    auto px = [&](int layer) {
        return max_layer == min_layer ? left + pw / 2 : left + pw * static_cast<double>(layer - min_layer) / layer_span;
    };
    auto py = [&](double v) { return top + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

    std::string s = svg::open(spec.width, spec.height);
    s += svg::text(spec.width / 2.0, 24, spec.title, "middle", 16);
    s += svg::line(left, top, left, top + ph);
    s += svg::line(left, top + ph, left + pw, top + ph);
    for (int t = 0; t <= 4; ++t) {
        const double v = t / 4.0;
        s += svg::line(left - 4, py(v), left, py(v));
        s += svg::text(left - 8, py(v) + 4, format_fixed(v, 2), "end", 10);
    }
    for (int layer = min_layer; layer <= max_layer && !conditions.empty(); ++layer) {
        s += svg::line(px(layer), top + ph, px(layer), top + ph + 4);
        s += svg::text(px(layer), top + ph + 16, std::to_string(layer), "middle", 10);
    }
    s += svg::text(left + pw / 2, spec.height - 10, spec.x_label.empty() ? "layer" : spec.x_label);
    const std::string ylab = spec.y_label.empty() ? (metric == CurveMetric::Accuracy ? "accuracy" : "F1") : spec.y_label;
    s += svg::text(16, top + ph / 2, ylab, "middle", 12, " transform=\"rotate(-90 16 " + svg::num(top + ph / 2) + ")\"");
    double ly = top + 8;
    for (const auto& se : series) {
        const std::string dash = se.dash.empty() ? "" : " stroke-dasharray=\"" + se.dash + "\"";
        s += "<polyline class=\"series\" fill=\"none\" stroke=\"" + se.color + "\" stroke-width=\"2\"" + dash + " points=\"";
        for (std::size_t k = 0; k < se.points.size(); ++k) {
            if (k) s += " ";
            s += svg::num(px(se.points[k].first)) + "," + svg::num(py(se.points[k].second));
        }
        s += "\"/>\n";
        for (const auto& [layer, v] : se.points) {
            s += "<circle class=\"pt\" cx=\"" + svg::num(px(layer)) + "\" cy=\"" + svg::num(py(v)) + "\" r=\"3\" fill=\"" +
                 se.color + "\"/>\n";
            ++out.glyphs;
        }
        s += "<line class=\"legend-line\" x1=\"" + svg::num(spec.width - right + 10) + "\" y1=\"" + svg::num(ly - 4) +
             "\" x2=\"" + svg::num(spec.width - right + 34) + "\" y2=\"" + svg::num(ly - 4) + "\" stroke=\"" + se.color +
             "\" stroke-width=\"2\"" + dash + "/>\n";
        s += svg::text(spec.width - right + 40, ly, se.name, "start", 10);
        ly += 14;
    }
    s += svg::close();
    out.svg = std::move(s);
    return out;
}

}  // namespace vscope

#endif  // VSCOPE_REPORT_HPP
