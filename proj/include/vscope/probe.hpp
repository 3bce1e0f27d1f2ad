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


// One-hidden-layer ReLU probe trained with Adam and early stopping on
// validation loss.

#ifndef VSCOPE_PROBE_HPP
#define VSCOPE_PROBE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vscope/alignment.hpp"
#include "vscope/common.hpp"
#include "vscope/embedding.hpp"
#include "vscope/error.hpp"
#include "vscope/features.hpp"
#include "vscope/random.hpp"

namespace vscope {

struct ProbeConfig {
    std::size_t input_dim = 768;
    std::size_t hidden_units = 200;
    std::size_t classes = 14;
    int max_epochs = 200;
    double learning_rate = 0.001;
    std::size_t batch_size = 256;
    int patience = 10;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    /// Per-dimension standardization fitted on the training split.
    bool standardize = false;

    void validate() const {
        auto bad = [](const std::string& m) { return Error(ErrorCode::InvalidConfig, m); };
        if (hidden_units < 1) throw bad("hidden_units must be >= 1");
        if (classes < 1) throw bad("classes must be >= 1");
        if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw bad("val_fraction must lie in (0, 1)");
        if (patience < 1) throw bad("patience must be >= 1");
        if (max_epochs < 1) throw bad("max_epochs must be >= 1");
        if (batch_size < 1) throw bad("batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw bad("learning_rate must be > 0");
    }
};

inline nlohmann::ordered_json to_json(const ProbeConfig& c) {
    nlohmann::ordered_json j;
    j["input_dim"] = c.input_dim;
    j["hidden_units"] = c.hidden_units;
    j["classes"] = c.classes;
    j["max_epochs"] = c.max_epochs;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["patience"] = c.patience;
    j["val_fraction"] = c.val_fraction;
    j["seed"] = c.seed;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    j["standardize"] = c.standardize;
    return j;
}

struct ProbeModel {
    MatrixD w1;  // input_dim x hidden
    std::vector<double> b1;
    MatrixD w2;  // hidden x classes
    std::vector<double> b2;
    std::vector<VisemeLabel> class_index;
    /// Empty unless the model standardizes its inputs.
    std::vector<double> input_mean;
    std::vector<double> input_scale;

    std::size_t input_dim() const noexcept { return w1.rows(); }
    std::size_t hidden() const noexcept { return w1.cols(); }
    std::size_t classes() const noexcept { return w2.cols(); }

    static ProbeModel zeros(std::size_t input_dim, std::size_t hidden, std::size_t classes) {
        ProbeModel m;
        m.w1 = MatrixD(input_dim, hidden);
        m.b1.assign(hidden, 0.0);
        m.w2 = MatrixD(hidden, classes);
        m.b2.assign(classes, 0.0);
        return m;
    }

    /// Applies the stored standardization, if any.
    MatrixD prepare(const MatrixD& x) const {
        if (input_mean.empty()) return x;
        MatrixD out = x;
        for (std::size_t i = 0; i < out.rows(); ++i) {
            auto r = out.row(i);
            for (std::size_t d = 0; d < r.size(); ++d) r[d] = (r[d] - input_mean[d]) / input_scale[d];
        }
        return out;
    }

    bool operator==(const ProbeModel&) const = default;
};

/// Parameter-shaped gradient (or Adam moment) storage.
struct ProbeParams {
    MatrixD w1;
    std::vector<double> b1;
    MatrixD w2;
    std::vector<double> b2;

    static ProbeParams like(const ProbeModel& m) {
        return {MatrixD(m.input_dim(), m.hidden()), std::vector<double>(m.hidden(), 0.0),
                MatrixD(m.hidden(), m.classes()), std::vector<double>(m.classes(), 0.0)};
    }
};

struct ForwardCache {
    MatrixD hidden;  // post-ReLU activations, batch x hidden
    MatrixD logits;  // batch x classes
};

namespace detail {

/// out = a * b + bias (row broadcast)
inline void affine(const MatrixD& a, const MatrixD& b, std::span<const double> bias, MatrixD& out) {
    out = MatrixD(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto o = out.row(i);
        std::copy(bias.begin(), bias.end(), o.begin());
        auto ar = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double v = ar[k];
            if (v == 0.0) continue;
            auto br = b.row(k);
            for (std::size_t j = 0; j < o.size(); ++j) o[j] += v * br[j];
        }
    }
}

}  // namespace detail

/// logits = max(0, x W1 + b1) W2 + b2
inline ForwardCache forward(const ProbeModel& m, const MatrixD& x) {
    assert(x.cols() == m.input_dim());
    ForwardCache c;
    detail::affine(x, m.w1, m.b1, c.hidden);
    for (auto& v : c.hidden.data()) v = std::max(v, 0.0);
    detail::affine(c.hidden, m.w2, m.b2, c.logits);
    return c;
}

struct LossGrad {
    double loss = 0.0;
    MatrixD dlogits;
};

/// Mean softmax cross-entropy with log-sum-exp stabilization; the gradient
/// is (softmax - onehot) / batch.
inline LossGrad cross_entropy(const MatrixD& logits, std::span<const int> labels) {
    assert(labels.size() == logits.rows());
    LossGrad out;
    out.dlogits = MatrixD(logits.rows(), logits.cols());
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto z = logits.row(i);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        const double lse = zmax + std::log(sum);
        const auto y = static_cast<std::size_t>(labels[i]);
        out.loss += lse - z[y];
        auto g = out.dlogits.row(i);
        for (std::size_t j = 0; j < z.size(); ++j) g[j] = std::exp(z[j] - lse) * inv_b;
        g[y] -= inv_b;
    }
    out.loss *= inv_b;
    return out;
}

/// Backpropagates dlogits through the network for the batch `x`.
inline ProbeParams backward(const ProbeModel& m, const MatrixD& x, const ForwardCache& cache, const MatrixD& dlogits) {
    ProbeParams g = ProbeParams::like(m);
    const std::size_t batch = x.rows(), hidden = m.hidden(), classes = m.classes();
    MatrixD dh(batch, hidden);
    for (std::size_t i = 0; i < batch; ++i) {
        auto h = cache.hidden.row(i);
        auto dl = dlogits.row(i);
        auto dhr = dh.row(i);
        for (std::size_t j = 0; j < classes; ++j) g.b2[j] += dl[j];
        for (std::size_t k = 0; k < hidden; ++k) {
            if (h[k] <= 0.0) continue;
            auto w2r = m.w2.row(k);
            auto gw2 = g.w2.row(k);
            double acc = 0.0;
            for (std::size_t j = 0; j < classes; ++j) {
                gw2[j] += h[k] * dl[j];
                acc += dl[j] * w2r[j];
            }
            dhr[k] = acc;
        }
    }
    for (std::size_t i = 0; i < batch; ++i) {
        auto xr = x.row(i);
        auto dhr = dh.row(i);
        for (std::size_t k = 0; k < hidden; ++k) g.b1[k] += dhr[k];
        for (std::size_t d = 0; d < xr.size(); ++d) {
            const double v = xr[d];
            if (v == 0.0) continue;
            auto gw1 = g.w1.row(d);
            for (std::size_t k = 0; k < hidden; ++k) gw1[k] += v * dhr[k];
        }
    }
    return g;
}

struct AdamSettings {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update at step t >= 1.
inline void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                      long t, const AdamSettings& s) {
    assert(params.size() == grads.size() && m.size() == params.size() && v.size() == params.size() && t >= 1);
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * grads[i];
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        params[i] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.eps);
    }
}

struct AdamState {
    ProbeParams m;
    ProbeParams v;
    long t = 0;

    explicit AdamState(const ProbeModel& model) : m(ProbeParams::like(model)), v(ProbeParams::like(model)) {}

    void step(ProbeModel& model, const ProbeParams& g, const AdamSettings& s) {
        ++t;
        adam_step(model.w1.data(), g.w1.data(), m.w1.data(), v.w1.data(), t, s);
        adam_step(model.b1, g.b1, m.b1, v.b1, t, s);
        adam_step(model.w2.data(), g.w2.data(), m.w2.data(), v.w2.data(), t, s);
        adam_step(model.b2, g.b2, m.b2, v.b2, t, s);
    }
};

/// Feature matrix with integer labels indexed into a class list.
struct LabeledData {
    MatrixD x;
    std::vector<int> y;

    std::size_t size() const noexcept { return y.size(); }
};

inline LabeledData to_labeled(const FeatureDataset& ds, const std::vector<VisemeLabel>& class_index) {
    std::map<std::string, int> lookup;
    for (std::size_t c = 0; c < class_index.size(); ++c) lookup[class_index[c].str()] = static_cast<int>(c);
    LabeledData out;
    out.x = feature_matrix(ds);
    out.y.reserve(ds.size());
    for (const auto& r : ds.records()) {
        auto it = lookup.find(r.viseme.str());
        if (it == lookup.end()) throw Error(ErrorCode::UnknownLabel, "viseme '" + r.viseme.str() + "' not in class index");
        out.y.push_back(it->second);
    }
    return out;
}

/// Stratified split: per viseme, round(n * val_fraction) records (at least
/// one, at most n - 1) go to validation. Both halves keep dataset order.
inline std::pair<FeatureDataset, FeatureDataset> split_train_val(const FeatureDataset& ds, double val_fraction,
                                                                 std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < ds.size(); ++i) members[ds.records()[i].viseme.str()].push_back(i);
    Rng rng(seed);
    std::vector<char> is_val(ds.size(), 0);
    for (auto& [viseme, idx] : members) {
        if (idx.size() < 2) throw Error(ErrorCode::ClassTooSmall, "viseme '" + viseme + "' has " + std::to_string(idx.size()) + " record(s)");
        rng.shuffle(std::span<std::size_t>(idx));
        auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * val_fraction));
        n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
        for (std::size_t k = 0; k < n_val; ++k) is_val[idx[k]] = 1;
    }
    std::pair<FeatureDataset, FeatureDataset> out;
    for (std::size_t i = 0; i < ds.size(); ++i) (is_val[i] ? out.second : out.first).add(ds.records()[i]);
    return out;
}

/// Tracks the best validation loss; signals a stop once `patience` epochs
/// pass without a strict improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    /// Returns true when training should stop after this epoch.
    bool observe(int epoch, double val_loss) {
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch;
            since_best_ = 0;
            return false;
        }
        return ++since_best_ >= patience_;
    }

    bool improved_at(int epoch) const noexcept { return best_epoch_ == epoch; }
    int best_epoch() const noexcept { return best_epoch_; }
    double best_loss() const noexcept { return best_loss_; }

private:
    int patience_;
    int best_epoch_ = 0;
    int since_best_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainTrace {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;
    bool stopped_early = false;
};

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// argmax over logits; ties resolve to the lowest class index.
inline std::vector<int> argmax_rows(const MatrixD& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto z = logits.row(i);
        out[i] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    }
    return out;
}

/// Loss and accuracy on already-prepared inputs, in chunks.
inline Evaluation evaluate(const ProbeModel& m, const LabeledData& data, std::size_t chunk = 1024) {
    Evaluation out;
    if (data.size() == 0) return out;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        const std::size_t end = std::min(data.size(), start + chunk);
        MatrixD xb(end - start, data.x.cols());
        std::copy(data.x.data().begin() + static_cast<std::ptrdiff_t>(start * data.x.cols()),
                  data.x.data().begin() + static_cast<std::ptrdiff_t>(end * data.x.cols()), xb.data().begin());
        std::span<const int> yb(data.y.data() + start, end - start);
        auto cache = forward(m, xb);
        out.loss += cross_entropy(cache.logits, yb).loss * static_cast<double>(end - start);
        auto pred = argmax_rows(cache.logits);
        for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == yb[i];
    }
    out.loss /= static_cast<double>(data.size());
    out.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return out;
}

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline ProbeModel init_probe(std::size_t input_dim, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
    auto m = ProbeModel::zeros(input_dim, hidden, classes);
    Rng rng(seed);
    const double l1 = std::sqrt(6.0 / static_cast<double>(input_dim + hidden));
    for (auto& v : m.w1.data()) v = rng.uniform(-l1, l1);
    const double l2 = std::sqrt(6.0 / static_cast<double>(hidden + classes));
    for (auto& v : m.w2.data()) v = rng.uniform(-l2, l2);
    return m;
}

/// Trains on `train`, selects the epoch with the lowest validation loss and
/// returns its parameters. Mini-batches are reshuffled every epoch from a
/// seed derived from cfg.seed.
inline std::pair<ProbeModel, TrainTrace> train_probe(const LabeledData& train, const LabeledData& val,
                                                     const ProbeConfig& cfg,
                                                     const std::vector<VisemeLabel>& class_index) {
    cfg.validate();
    if (train.size() == 0 || val.size() == 0) throw Error(ErrorCode::InvalidConfig, "empty train or validation split");
    if (class_index.size() != cfg.classes) throw Error(ErrorCode::ClassIndexMismatch, "class_index length != classes");
    const std::size_t dim = train.x.cols();
    if (val.x.cols() != dim) throw Error(ErrorCode::ShapeMismatch, "train/validation dimension mismatch");
    for (int y : train.y) {
        if (y < 0 || static_cast<std::size_t>(y) >= cfg.classes) throw Error(ErrorCode::UnknownLabel, "train label out of range");
    }
    for (int y : val.y) {
        if (y < 0 || static_cast<std::size_t>(y) >= cfg.classes) throw Error(ErrorCode::UnknownLabel, "val label out of range");
    }

    ProbeModel model = init_probe(dim, cfg.hidden_units, cfg.classes, derive_seed(cfg.seed, "probe-init"));
    model.class_index = class_index;
    if (cfg.standardize) {
        model.input_mean.assign(dim, 0.0);
        model.input_scale.assign(dim, 0.0);
        for (std::size_t i = 0; i < train.size(); ++i) {
            for (std::size_t d = 0; d < dim; ++d) model.input_mean[d] += train.x(i, d);
        }
        for (auto& v : model.input_mean) v /= static_cast<double>(train.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
            for (std::size_t d = 0; d < dim; ++d) {
                const double t = train.x(i, d) - model.input_mean[d];
                model.input_scale[d] += t * t;
            }
        }
        for (auto& v : model.input_scale) {
            v = std::sqrt(v / static_cast<double>(train.size()));
            if (!(v > 1e-12)) v = 1.0;
        }
    }
    const LabeledData tr{model.prepare(train.x), train.y};
    const LabeledData va{model.prepare(val.x), val.y};

    const AdamSettings adam{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
    AdamState state(model);
    EarlyStopping stopper(cfg.patience);
    ProbeModel best = model;
    TrainTrace trace;
    std::vector<std::size_t> order(tr.size());
    MatrixD xb;
    std::vector<int> yb;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(derive_seed(cfg.seed, "probe-shuffle", static_cast<std::uint64_t>(epoch)));
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            xb = MatrixD(end - start, dim);
            yb.resize(end - start);
            for (std::size_t b = start; b < end; ++b) {
                auto src = tr.x.row(order[b]);
                std::copy(src.begin(), src.end(), xb.row(b - start).begin());
                yb[b - start] = tr.y[order[b]];
            }
            auto cache = forward(model, xb);
            auto lg = cross_entropy(cache.logits, yb);
            if (!std::isfinite(lg.loss)) throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch));
            state.step(model, backward(model, xb, cache, lg.dlogits), adam);
        }
        const auto train_eval = evaluate(model, tr);
        const auto val_eval = evaluate(model, va);
        if (!std::isfinite(train_eval.loss) || !std::isfinite(val_eval.loss)) {
            throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch));
        }
        trace.epochs.push_back({epoch, train_eval.loss, val_eval.loss, val_eval.accuracy});
        const bool stop = stopper.observe(epoch, val_eval.loss);
        if (stopper.improved_at(epoch)) best = model;
        if (stop) {
            trace.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    trace.best_epoch = stopper.best_epoch();
    return {std::move(best), std::move(trace)};
}

inline std::vector<VisemeLabel> predict(const ProbeModel& m, const MatrixD& x) {
    auto logits = forward(m, m.prepare(x)).logits;
    std::vector<VisemeLabel> out;
    out.reserve(logits.rows());
    for (int c : argmax_rows(logits)) out.push_back(m.class_index[static_cast<std::size_t>(c)]);
    return out;
}

inline std::string serialize_training_log(const TrainTrace& trace) {
    std::string out = "epoch,train_loss,val_loss,val_acc\n";
    for (const auto& e : trace.epochs) {
        out += std::to_string(e.epoch) + "," + format_real(e.train_loss) + "," + format_real(e.val_loss) + "," +
               format_real(e.val_acc) + "\n";
    }
    return out;
}

/// Model file: one line of JSON (dims, class_index, config, seed,
/// standardization), then EMB1 blobs for W1, b1, W2, b2. Parameters are
/// stored as binary32.
inline std::string serialize_model(const ProbeModel& m, const ProbeConfig& cfg) {
    nlohmann::ordered_json h;
    h["format"] = "vscope-probe";
    h["version"] = 1;
    h["input_dim"] = m.input_dim();
    h["hidden_units"] = m.hidden();
    h["classes"] = m.classes();
    h["class_index"] = nlohmann::ordered_json::array();
    for (const auto& c : m.class_index) h["class_index"].push_back(c.str());
    h["seed"] = cfg.seed;
    h["config"] = to_json(cfg);
    if (!m.input_mean.empty()) {
        h["input_mean"] = m.input_mean;
        h["input_scale"] = m.input_scale;
    }
    std::string out = h.dump() + "\n";
    auto blob = [&](std::size_t rows, std::size_t cols, std::span<const double> v) {
        Matrix<float> f(rows, cols);
        for (std::size_t i = 0; i < v.size(); ++i) f.data()[i] = static_cast<float>(v[i]);
        out += encode_emb1(f);
    };
    blob(m.w1.rows(), m.w1.cols(), m.w1.data());
    blob(1, m.b1.size(), m.b1);
    blob(m.w2.rows(), m.w2.cols(), m.w2.data());
    blob(1, m.b2.size(), m.b2);
    return out;
}

inline ProbeModel parse_model(std::string_view bytes) {
    const auto nl = bytes.find('\n');
    if (nl == std::string_view::npos) throw Error(ErrorCode::MalformedModel, "missing header line");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedModel, e.what());
    }
    if (h.value("format", "") != "vscope-probe") throw Error(ErrorCode::MalformedModel, "not a probe model");
    const auto dim = h.at("input_dim").get<std::size_t>();
    const auto hidden = h.at("hidden_units").get<std::size_t>();
    const auto classes = h.at("classes").get<std::size_t>();
    std::size_t offset = nl + 1;
    auto take = [&](std::size_t rows, std::size_t cols) {
        auto f = decode_emb1(bytes, offset);
        if (f.rows() != rows || f.cols() != cols) throw Error(ErrorCode::MalformedModel, "parameter shape mismatch");
        std::vector<double> v(f.data().begin(), f.data().end());
        return v;
    };
    ProbeModel m;
    m.w1 = MatrixD(dim, hidden, take(dim, hidden));
    m.b1 = take(1, hidden);
    m.w2 = MatrixD(hidden, classes, take(hidden, classes));
    m.b2 = take(1, classes);
    if (offset != bytes.size()) throw Error(ErrorCode::MalformedModel, "trailing bytes");
    for (const auto& c : h.at("class_index")) m.class_index.emplace_back(c.get<std::string>());
    if (m.class_index.size() != classes) throw Error(ErrorCode::MalformedModel, "class_index length");
    if (h.contains("input_mean")) {
        m.input_mean = h["input_mean"].get<std::vector<double>>();
        m.input_scale = h["input_scale"].get<std::vector<double>>();
    }
    return m;
}

}  // namespace vscope

#endif  // VSCOPE_PROBE_HPP
