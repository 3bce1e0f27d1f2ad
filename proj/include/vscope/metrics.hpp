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


#ifndef VSCOPE_METRICS_HPP
#define VSCOPE_METRICS_HPP

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vscope/alignment.hpp"
#include "vscope/common.hpp"
#include "vscope/error.hpp"

namespace vscope {

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::vector<VisemeLabel> class_index;
    Matrix<std::size_t> counts;

    std::size_t total() const {
        std::size_t t = 0;
        for (auto v : counts.data()) t += v;
        return t;
    }
    std::size_t trace() const {
        std::size_t t = 0;
        for (std::size_t i = 0; i < counts.rows(); ++i) t += counts(i, i);
        return t;
    }
};

inline ConfusionMatrix confusion(const std::vector<VisemeLabel>& truth, const std::vector<VisemeLabel>& predicted,
                                 const std::vector<VisemeLabel>& class_index) {
    if (truth.size() != predicted.size()) {
        throw Error(ErrorCode::LengthMismatch,
                    std::to_string(truth.size()) + " true vs " + std::to_string(predicted.size()) + " predicted labels");
    }
    std::map<std::string, std::size_t> lookup;
    for (std::size_t c = 0; c < class_index.size(); ++c) lookup[class_index[c].str()] = c;
    auto index_of = [&](const VisemeLabel& v) {
        auto it = lookup.find(v.str());
        if (it == lookup.end()) throw Error(ErrorCode::UnknownLabel, "'" + v.str() + "'");
        return it->second;
    };
    ConfusionMatrix cm{class_index, Matrix<std::size_t>(class_index.size(), class_index.size(), 0)};
    for (std::size_t k = 0; k < truth.size(); ++k) ++cm.counts(index_of(truth[k]), index_of(predicted[k]));
    return cm;
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;  // true count
};

/// Harmonic mean with 0/0 defined as 0.
inline double f1_score(double precision, double recall) {
    const double s = precision + recall;
    return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

struct EvalReport {
    std::string condition;
    int layer = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<VisemeLabel> class_index;
    std::vector<ClassMetrics> per_class;  // aligned with class_index
    std::vector<std::string> warnings;
    ConfusionMatrix confusion;

    const ClassMetrics& metrics_of(const VisemeLabel& v) const {
        for (std::size_t c = 0; c < class_index.size(); ++c) {
            if (class_index[c] == v) return per_class[c];
        }
        throw Error(ErrorCode::UnknownLabel, "'" + v.str() + "'");
    }
};

/// Per-class precision tp/(tp+fp), recall tp/(tp+fn) and F1, with 0/0 -> 0
/// (warned). Macro-F1 averages classes with non-zero support only; the
/// excluded classes are listed in the warnings.
inline EvalReport per_class_f1(const ConfusionMatrix& cm) {
    EvalReport r;
    r.class_index = cm.class_index;
    r.confusion = cm;
    const std::size_t c = cm.class_index.size();
    double macro = 0.0;
    std::size_t counted = 0;
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t tp = cm.counts(k, k), row = 0, col = 0;
        for (std::size_t j = 0; j < c; ++j) {
            row += cm.counts(k, j);
            col += cm.counts(j, k);
        }
        ClassMetrics m;
        m.support = row;
        m.precision = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        m.recall = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        m.f1 = f1_score(m.precision, m.recall);
        if (col == 0) r.warnings.push_back("class " + cm.class_index[k].str() + " never predicted; precision set to 0");
        if (row == 0) {
            r.warnings.push_back("class " + cm.class_index[k].str() + " has zero support; excluded from macro-F1");
        } else {
            macro += m.f1;
            ++counted;
        }
        r.per_class.push_back(m);
    }
    r.macro_f1 = counted > 0 ? macro / static_cast<double>(counted) : 0.0;
    const auto total = cm.total();
    r.accuracy = total > 0 ? static_cast<double>(cm.trace()) / static_cast<double>(total) : 0.0;
    return r;
}

/// Support-weighted recall, computed from per-class counts rather than the
/// confusion trace. Equals accuracy.
inline double micro_recall(const EvalReport& r) {
    double hits = 0.0, support = 0.0;
    for (const auto& m : r.per_class) {
        hits += m.recall * static_cast<double>(m.support);
        support += static_cast<double>(m.support);
    }
    return support > 0.0 ? hits / support : 0.0;
}

inline EvalReport evaluation_report(const ConfusionMatrix& cm, std::string condition, int layer) {
    auto r = per_class_f1(cm);
    r.condition = std::move(condition);
    r.layer = layer;
    return r;
}

/// f1_b - f1_a for every class.
inline std::vector<std::pair<VisemeLabel, double>> condition_delta(const EvalReport& a, const EvalReport& b) {
    if (a.class_index != b.class_index || a.layer != b.layer) {
        throw Error(ErrorCode::ClassIndexMismatch, "reports differ in class index or layer");
    }
    std::vector<std::pair<VisemeLabel, double>> out;
    for (std::size_t c = 0; c < a.class_index.size(); ++c) {
        out.emplace_back(a.class_index[c], b.per_class[c].f1 - a.per_class[c].f1);
    }
    return out;
}

/// Per-class mean of F1 deltas over several layers.
inline std::vector<std::pair<VisemeLabel, double>> mean_condition_delta(const std::vector<EvalReport>& a,
                                                                       const std::vector<EvalReport>& b) {
    if (a.size() != b.size() || a.empty()) throw Error(ErrorCode::LengthMismatch, "report lists differ in length");
    std::vector<std::pair<VisemeLabel, double>> acc;
    for (std::size_t l = 0; l < a.size(); ++l) {
        auto d = condition_delta(a[l], b[l]);
        if (acc.empty()) {
            acc = d;
        } else {
            for (std::size_t c = 0; c < d.size(); ++c) acc[c].second += d[c].second;
        }
    }
    for (auto& [v, x] : acc) x /= static_cast<double>(a.size());
    return acc;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["condition"] = r.condition;
    j["layer"] = r.layer;
    j["accuracy"] = r.accuracy;
    j["macro_f1"] = r.macro_f1;
    j["per_class"] = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < r.class_index.size(); ++c) {
        const auto& m = r.per_class[c];
        j["per_class"][r.class_index[c].str()] = {
            {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
    }
    j["class_index"] = nlohmann::ordered_json::array();
    for (const auto& c : r.class_index) j["class_index"].push_back(c.str());
    j["confusion"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < r.confusion.counts.rows(); ++i) {
        auto row = r.confusion.counts.row(i);
        j["confusion"].push_back(std::vector<std::size_t>(row.begin(), row.end()));
    }
    j["warnings"] = r.warnings;
    return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.condition = j.at("condition").get<std::string>();
    r.layer = j.at("layer").get<int>();
    for (const auto& c : j.at("class_index")) r.class_index.emplace_back(c.get<std::string>());
    const std::size_t n = r.class_index.size();
    r.confusion.class_index = r.class_index;
    r.confusion.counts = Matrix<std::size_t>(n, n, 0);
    const auto& rows = j.at("confusion");
    if (rows.size() != n) throw Error(ErrorCode::ClassIndexMismatch, "confusion rows");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) r.confusion.counts(i, k) = rows[i].at(k).get<std::size_t>();
    }
    auto rebuilt = per_class_f1(r.confusion);
    rebuilt.condition = r.condition;
    rebuilt.layer = r.layer;
    return rebuilt;
}

inline constexpr std::string_view kF1ByLayerHeader = "condition,layer,viseme,precision,recall,f1,support";

inline std::string f1_by_layer_rows(const EvalReport& r) {
    std::string out;
    for (std::size_t c = 0; c < r.class_index.size(); ++c) {
        const auto& m = r.per_class[c];
        out += r.condition + "," + std::to_string(r.layer) + "," + r.class_index[c].str() + "," + format_real(m.precision) +
               "," + format_real(m.recall) + "," + format_real(m.f1) + "," + std::to_string(m.support) + "\n";
    }
    return out;
}

}  // namespace vscope

#endif  // VSCOPE_METRICS_HPP
