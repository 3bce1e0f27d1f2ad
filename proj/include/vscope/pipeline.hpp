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


// Run configuration, run manifests and the pipeline commands behind the CLI.

#ifndef VSCOPE_PIPELINE_HPP
#define VSCOPE_PIPELINE_HPP

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vscope/alignment.hpp"
#include "vscope/common.hpp"
#include "vscope/embedding.hpp"
#include "vscope/error.hpp"
#include "vscope/features.hpp"
#include "vscope/metrics.hpp"
#include "vscope/probe.hpp"
#include "vscope/random.hpp"
#include "vscope/report.hpp"
#include "vscope/synthetic.hpp"
#include "vscope/tsne.hpp"

#ifndef VSCOPE_VERSION
#define VSCOPE_VERSION "0.1.0"
#endif

namespace vscope {

inline constexpr std::string_view kToolVersion = VSCOPE_VERSION;

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// RunConfig

/// Everything a pipeline command needs. Empty `layers` / `conditions` mean
/// "every one listed in the corpus manifest". Per-stage seeds (subsample,
/// t-SNE, probe, splits) are derived from `seed`; the t-SNE and probe
/// sections carry no seed of their own.
struct RunConfig {
    fs::path manifest;
    fs::path alignment;
    std::string viseme_map = "lee";  // "lee" or a map file path
    std::vector<int> layers;
    std::vector<std::string> conditions;
    fs::path features;  // feature cache; defaults to <out>/features.csv
    fs::path out;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::size_t per_class = 500;
    /// Stratified share of each (condition, layer) slice held out for the
    /// reported metrics; the probe's validation split comes from the rest.
    double eval_fraction = 0.1;
    TsneConfig tsne;
    ProbeConfig probe;

    fs::path features_path() const { return features.empty() ? out / "features.csv" : features; }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["manifest"] = c.manifest.string();
    j["alignment"] = c.alignment.string();
    j["viseme_map"] = c.viseme_map;
    j["layers"] = c.layers;
    j["conditions"] = c.conditions;
    j["features"] = c.features.string();
    j["out"] = c.out.string();
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["subsample"] = {{"per_class", c.per_class}};
    j["eval_fraction"] = c.eval_fraction;
    const auto& t = c.tsne;
    j["tsne"] = {{"perplexity", t.perplexity},
                 {"early_exaggeration", t.early_exaggeration},
                 {"exaggeration_iters", t.exaggeration_iters},
                 {"n_iter", t.n_iter},
                 {"learning_rate", t.learning_rate},
                 {"theta", t.theta},
                 {"metric", metric_name(t.metric)},
                 {"init", init_name(t.init)},
                 {"momentum_early", t.momentum_early},
                 {"momentum_late", t.momentum_late},
                 {"momentum_switch_iter", t.momentum_switch_iter},
                 {"restarts", t.restarts},
                 {"trust_k", t.trust_k},
                 {"min_trust", t.min_trust},
                 {"kl_every", t.kl_every}};
    const auto& p = c.probe;
    j["probe"] = {{"hidden_units", p.hidden_units}, {"max_epochs", p.max_epochs}, {"learning_rate", p.learning_rate},
                  {"batch_size", p.batch_size},     {"patience", p.patience},     {"val_fraction", p.val_fraction},
                  {"adam_beta1", p.adam_beta1},     {"adam_beta2", p.adam_beta2}, {"adam_eps", p.adam_eps},
                  {"standardize", p.standardize}};
    return j;
}

namespace detail {

inline void check_keys(const nlohmann::json& given, const nlohmann::ordered_json& known, const std::string& prefix) {
    if (!given.is_object()) throw Error(ErrorCode::InvalidConfig, (prefix.empty() ? "config" : prefix) + " must be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!known.contains(key)) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + path + "'");
        if (known[key].is_object()) check_keys(value, known[key], path);
    }
}

template <typename T>
T get_as(const nlohmann::json& j, const char* key, const std::string& section) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::InvalidConfig, "bad value for '" + (section.empty() ? "" : section + ".") + key + "'");
    }
}

}  // namespace detail

/// Strict conversion: unknown keys and wrongly typed values are InvalidConfig.
/// Missing keys keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& given) {
    const auto defaults = to_json(RunConfig{});
    detail::check_keys(given, defaults, "");
    nlohmann::json j = defaults;
    j.merge_patch(given);
    using detail::get_as;
    RunConfig c;
    c.manifest = get_as<std::string>(j, "manifest", "");
    c.alignment = get_as<std::string>(j, "alignment", "");
    c.viseme_map = get_as<std::string>(j, "viseme_map", "");
    c.layers = get_as<std::vector<int>>(j, "layers", "");
    c.conditions = get_as<std::vector<std::string>>(j, "conditions", "");
    c.features = get_as<std::string>(j, "features", "");
    c.out = get_as<std::string>(j, "out", "");
    c.seed = get_as<std::uint64_t>(j, "seed", "");
    c.jobs = get_as<std::size_t>(j, "jobs", "");
    c.per_class = get_as<std::size_t>(j["subsample"], "per_class", "subsample");
    c.eval_fraction = get_as<double>(j, "eval_fraction", "");
    const auto& t = j["tsne"];
    c.tsne.perplexity = get_as<double>(t, "perplexity", "tsne");
    c.tsne.early_exaggeration = get_as<double>(t, "early_exaggeration", "tsne");
    c.tsne.exaggeration_iters = get_as<int>(t, "exaggeration_iters", "tsne");
    c.tsne.n_iter = get_as<int>(t, "n_iter", "tsne");
    c.tsne.learning_rate = get_as<double>(t, "learning_rate", "tsne");
    c.tsne.theta = get_as<double>(t, "theta", "tsne");
    c.tsne.metric = parse_metric(get_as<std::string>(t, "metric", "tsne"));
    c.tsne.init = parse_init(get_as<std::string>(t, "init", "tsne"));
    c.tsne.momentum_early = get_as<double>(t, "momentum_early", "tsne");
    c.tsne.momentum_late = get_as<double>(t, "momentum_late", "tsne");
    c.tsne.momentum_switch_iter = get_as<int>(t, "momentum_switch_iter", "tsne");
    c.tsne.restarts = get_as<int>(t, "restarts", "tsne");
    c.tsne.trust_k = get_as<int>(t, "trust_k", "tsne");
    c.tsne.min_trust = get_as<double>(t, "min_trust", "tsne");
    c.tsne.kl_every = get_as<int>(t, "kl_every", "tsne");
    const auto& p = j["probe"];
    c.probe.hidden_units = get_as<std::size_t>(p, "hidden_units", "probe");
    c.probe.max_epochs = get_as<int>(p, "max_epochs", "probe");
    c.probe.learning_rate = get_as<double>(p, "learning_rate", "probe");
    c.probe.batch_size = get_as<std::size_t>(p, "batch_size", "probe");
    c.probe.patience = get_as<int>(p, "patience", "probe");
    c.probe.val_fraction = get_as<double>(p, "val_fraction", "probe");
    c.probe.adam_beta1 = get_as<double>(p, "adam_beta1", "probe");
    c.probe.adam_beta2 = get_as<double>(p, "adam_beta2", "probe");
    c.probe.adam_eps = get_as<double>(p, "adam_eps", "probe");
    c.probe.standardize = get_as<bool>(p, "standardize", "probe");
    if (c.jobs < 1) throw Error(ErrorCode::InvalidConfig, "jobs must be >= 1");
    if (!(c.eval_fraction > 0.0 && c.eval_fraction < 1.0)) throw Error(ErrorCode::InvalidConfig, "eval_fraction must lie in (0, 1)");
    if (c.per_class < 1) throw Error(ErrorCode::InvalidConfig, "subsample.per_class must be >= 1");
    c.tsne.validate();
    c.probe.validate();
    return c;
}

/// Dotted keys of every overridable field, e.g. "tsne.perplexity".
inline std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    const auto defaults = to_json(RunConfig{});
    for (const auto& [k, v] : defaults.items()) {
        if (v.is_object()) {
            for (const auto& [k2, v2] : v.items()) out.push_back(k + "." + k2);
        } else {
            out.push_back(k);
        }
    }
    return out;
}

/// Sets one dotted field from command-line text. Numbers and booleans are
/// parsed; list fields take comma-separated items or a JSON array.
inline void apply_override(nlohmann::json& j, const std::string& key, const std::string& text) {
    const auto defaults = to_json(RunConfig{});
    const auto parts = split(key, '.');
    const nlohmann::ordered_json* known = &defaults;
    nlohmann::json* target = &j;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const std::string part(parts[i]);
        if (!known->is_object() || !known->contains(part)) throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
        known = &(*known)[part];
        if (i + 1 < parts.size()) {
            if (!target->contains(part)) (*target)[part] = nlohmann::json::object();
            target = &(*target)[part];
        }
    }
    const std::string leaf(parts.back());
    auto bad = [&] { return Error(ErrorCode::InvalidConfig, "bad value '" + text + "' for --" + key); };
    if (known->is_object()) throw Error(ErrorCode::InvalidConfig, "'" + key + "' is a section, not a field");
    if (known->is_array()) {
        nlohmann::json arr = nlohmann::json::array();
        const bool ints = key == "layers";
        if (!text.empty() && text.front() == '[') {
            try {
                arr = nlohmann::json::parse(text);
            } catch (const nlohmann::json::exception&) {
                throw bad();
            }
        } else if (!text.empty()) {
            for (auto item : split(text, ',')) {
                item = trim(item);
                if (ints) {
                    auto v = parse_int<int>(item);
                    if (!v) throw bad();
                    arr.push_back(*v);
                } else {
                    arr.push_back(std::string(item));
                }
            }
        }
        (*target)[leaf] = arr;
    } else if (known->is_boolean()) {
        if (text == "true" || text == "1") {
            (*target)[leaf] = true;
        } else if (text == "false" || text == "0") {
            (*target)[leaf] = false;
        } else {
            throw bad();
        }
    } else if (known->is_number_unsigned() || known->is_number_integer()) {
        auto v = parse_int<long long>(text);
        if (!v) throw bad();
        (*target)[leaf] = *v;
    } else if (known->is_number()) {
        auto v = parse_real(text);
        if (!v) throw bad();
        (*target)[leaf] = *v;
    } else {
        (*target)[leaf] = text;
    }
}

/// Config file (optional) with `overrides` applied on top. Relative paths in
/// the file resolve against the file's directory. The output directory falls
/// back to `env_out` (VSCOPE_OUT) when neither file nor flags set it.
inline RunConfig load_run_config(const std::optional<fs::path>& file,
                                 const std::vector<std::pair<std::string, std::string>>& overrides,
                                 const std::optional<std::string>& env_out = std::nullopt) {
    nlohmann::json j = nlohmann::json::object();
    if (file) {
        try {
            j = nlohmann::json::parse(read_file(*file));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, file->string() + ": " + e.what());
        }
        if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, file->string() + ": not a JSON object");
        const auto base = file->parent_path();
        for (const char* key : {"manifest", "alignment", "features", "out"}) {
            if (j.contains(key) && j[key].is_string() && !j[key].get<std::string>().empty()) {
                fs::path p = j[key].get<std::string>();
                if (p.is_relative()) j[key] = (base / p).lexically_normal().string();
            }
        }
        if (j.contains("viseme_map") && j["viseme_map"].is_string()) {
            fs::path p = j["viseme_map"].get<std::string>();
            if (p != "lee" && p.is_relative()) j["viseme_map"] = (base / p).lexically_normal().string();
        }
    }
    for (const auto& [k, v] : overrides) apply_override(j, k, v);
    auto cfg = run_config_from_json(j);
    if (cfg.out.empty() && env_out && !env_out->empty()) cfg.out = *env_out;
    return cfg;
}

// ---------------------------------------------------------------------------
// RunManifest

/// Collects what a command read and wrote; finish() writes
/// run_manifest_<command>.json into the output directory.
class RunRecorder {
public:
    RunRecorder(std::string command, const RunConfig& cfg, std::ostream& log = std::cerr)
        : command_(std::move(command)), cfg_(cfg), log_(log) {
        if (cfg_.out.empty()) throw Error(ErrorCode::InvalidConfig, "no output directory (--out or VSCOPE_OUT)");
    }

    const RunConfig& config() const noexcept { return cfg_; }

    void input(const fs::path& path, std::string_view bytes) { inputs_[path.string()] = hex64(fnv1a64(bytes)); }

    void output(const std::string& name, std::string_view bytes) {
        write_file_atomic(cfg_.out / name, bytes);
        outputs_.push_back(name);
    }

    /// For files written to a path outside the output directory.
    void output_path(const fs::path& path, std::string_view bytes) {
        write_file_atomic(path, bytes);
        outputs_.push_back(path.string());
    }

    template <typename Fn>
    void stage(const std::string& name, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        timings_[name] += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    void skipped(const std::string& slice, std::size_t n) { skipped_[slice] = n; }

    void warn(const std::string& msg) {
        log_ << "warning: " << msg << "\n";
        warnings_.push_back(msg);
    }

    void fail(const std::string& msg) {
        log_ << "error: " << msg << "\n";
        failures_.push_back(msg);
    }

    bool ok() const noexcept { return failures_.empty(); }
    const std::vector<std::string>& outputs() const noexcept { return outputs_; }

    fs::path finish() {
        nlohmann::ordered_json m;
        m["tool"] = "vscope";
        m["version"] = kToolVersion;
        m["command"] = command_;
        m["status"] = ok() ? "ok" : "failed";
        m["config"] = to_json(cfg_);
        m["inputs"] = inputs_;
        std::size_t total = 0;
        for (const auto& [k, n] : skipped_) total += n;
        m["skipped_segments"] = {{"total", total}, {"by_slice", skipped_}};
        m["wall_clock_seconds"] = timings_;
        m["outputs"] = outputs_;
        m["warnings"] = warnings_;
        m["failures"] = failures_;
        const auto path = cfg_.out / ("run_manifest_" + command_ + ".json");
        write_file_atomic(path, m.dump(2) + "\n");
        return path;
    }

private:
    std::string command_;
    RunConfig cfg_;
    std::ostream& log_;
    nlohmann::ordered_json inputs_ = nlohmann::ordered_json::object();
    std::vector<std::string> outputs_;
    std::map<std::string, double> timings_;
    std::map<std::string, std::size_t> skipped_;
    std::vector<std::string> warnings_;
    std::vector<std::string> failures_;
};

// ---------------------------------------------------------------------------
// Inputs

inline VisemeMap load_viseme_map(const std::string& spec, RunRecorder* rec = nullptr) {
    if (spec == "lee") return lee_map();
    const auto bytes = read_file(spec);
    if (rec) rec->input(spec, bytes);
    try {
        return parse_viseme_map(bytes, fs::path(spec).stem().string());
    } catch (const Error& e) {
        throw e.with_context(spec);
    }
}

inline std::vector<AlignmentSegment> load_alignment(const fs::path& path, RunRecorder* rec = nullptr) {
    if (path.empty()) throw Error(ErrorCode::InvalidConfig, "no alignment file configured");
    const auto bytes = read_file(path);
    if (rec) rec->input(path, bytes);
    try {
        return parse_alignment_csv(bytes);
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

inline CorpusManifest load_manifest(const fs::path& path, RunRecorder* rec = nullptr) {
    if (path.empty()) throw Error(ErrorCode::InvalidConfig, "no corpus manifest configured");
    const auto bytes = read_file(path);
    if (rec) rec->input(path, bytes);
    try {
        return CorpusManifest::parse(bytes, path.parent_path());
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

/// Fills empty layer / condition lists from the manifest.
inline void resolve_slices(RunConfig& cfg, const CorpusManifest& manifest) {
    if (cfg.layers.empty()) {
        for (const auto& e : manifest.entries()) cfg.layers.push_back(e.layer);
        std::sort(cfg.layers.begin(), cfg.layers.end());
        cfg.layers.erase(std::unique(cfg.layers.begin(), cfg.layers.end()), cfg.layers.end());
    }
    if (cfg.conditions.empty()) {
        for (const auto& e : manifest.entries()) {
            if (std::find(cfg.conditions.begin(), cfg.conditions.end(), e.condition) == cfg.conditions.end()) {
                cfg.conditions.push_back(e.condition);
            }
        }
    }
    if (cfg.layers.empty() || cfg.conditions.empty()) throw Error(ErrorCode::InvalidConfig, "no layers or conditions to process");
}

inline FeatureDataset load_feature_cache(const RunConfig& cfg, RunRecorder* rec = nullptr) {
    const auto path = cfg.features_path();
    if (!fs::exists(path)) throw Error(ErrorCode::IoError, "feature cache " + path.string() + " not found (run build-features)");
    const auto bytes = read_file(path);
    if (rec) rec->input(path, bytes);
    try {
        return parse_dataset_csv(bytes);
    } catch (const Error& e) {
        throw e.with_context(path.string());
    }
}

/// Layers and conditions of the config, or of the cache when unset.
inline void resolve_slices(RunConfig& cfg, const FeatureDataset& ds) {
    if (cfg.layers.empty()) cfg.layers = ds.layers();
    if (cfg.conditions.empty()) cfg.conditions = ds.conditions();
    if (cfg.layers.empty() || cfg.conditions.empty()) throw Error(ErrorCode::InvalidConfig, "no layers or conditions to process");
}

inline std::string slice_name(const std::string& condition, int layer) { return condition + "_" + std::to_string(layer); }

// ---------------------------------------------------------------------------
// Commands

/// alignment + embeddings -> features.csv
inline FeatureDataset cmd_build_features(RunConfig cfg, std::ostream& log = std::cerr) {
    RunRecorder rec("build-features", cfg, log);
    VisemeMap map;
    std::vector<AlignmentSegment> segments;
    CorpusManifest manifest;
    rec.stage("load", [&] {
        map = load_viseme_map(cfg.viseme_map, &rec);
        segments = load_alignment(cfg.alignment, &rec);
        manifest = load_manifest(cfg.manifest, &rec);
        resolve_slices(cfg, manifest);
        for (const auto& e : manifest.entries()) {
            const bool wanted = std::find(cfg.layers.begin(), cfg.layers.end(), e.layer) != cfg.layers.end() &&
                                std::find(cfg.conditions.begin(), cfg.conditions.end(), e.condition) != cfg.conditions.end();
            if (wanted && fs::exists(manifest.resolve(e))) rec.input(manifest.resolve(e), read_file(manifest.resolve(e)));
        }
    });
    BuildResult built;
    rec.stage("features", [&] {
        auto provider = [&](const std::string& utt, const std::string& cond, int layer) -> std::optional<EmbeddingSequence> {
            const auto* e = manifest.find(utt, cond, layer);
            if (!e) return std::nullopt;
            const auto path = manifest.resolve(*e);
            if (!fs::exists(path)) {
                throw Error(ErrorCode::MissingUtterance, utt + ": embedding file " + path.string() + " does not exist");
            }
            try {
                return manifest.read(*e);
            } catch (const Error& err) {
                throw err.with_context(path.string());
            }
        };
        built = build_dataset(provider, segments, map, cfg.conditions, cfg.layers, cfg.jobs);
    });
    std::map<std::string, std::size_t> skips;
    for (const auto& c : cfg.conditions)
        for (int l : cfg.layers) skips[slice_name(c, l)] = 0;
    for (const auto& s : built.skipped) ++skips[slice_name(s.condition, s.layer)];
    for (const auto& [k, n] : skips) rec.skipped(k, n);
    if (!built.skipped.empty()) {
        rec.warn(std::to_string(built.skipped.size()) + " segment(s) covered no frame center and were skipped");
    }
    rec.stage("write", [&] { rec.output_path(cfg.features_path(), serialize_dataset_csv(built.dataset)); });
    rec.finish();
    return std::move(built.dataset);
}

/// Picks the single (condition, layer) a t-SNE run works on.
inline std::pair<std::string, int> tsne_target(const RunConfig& cfg, const std::optional<std::string>& condition,
                                               const std::optional<int>& layer) {
    auto cond = condition;
    auto lay = layer;
    if (!cond) {
        if (cfg.conditions.size() != 1) throw Error(ErrorCode::InvalidConfig, "choose a condition with --condition");
        cond = cfg.conditions.front();
    }
    if (!lay) {
        if (cfg.layers.size() != 1) throw Error(ErrorCode::InvalidConfig, "choose a layer with --layer");
        lay = cfg.layers.front();
    }
    return {*cond, *lay};
}

/// features.csv slice -> balanced subsample -> t-SNE -> coords, quality and
/// scatter plot.
inline TsneResult cmd_tsne(RunConfig cfg, const std::optional<std::string>& condition, const std::optional<int>& layer,
                           std::ostream& log = std::cerr) {
    RunRecorder rec("tsne", cfg, log);
    FeatureDataset ds;
    VisemeMap map;
    rec.stage("load", [&] {
        map = load_viseme_map(cfg.viseme_map, &rec);
        ds = load_feature_cache(cfg, &rec);
        resolve_slices(cfg, ds);
    });
    const auto [cond, lay] = tsne_target(cfg, condition, layer);
    const auto slice = ds.slice(cond, lay);
    if (slice.empty()) throw Error(ErrorCode::InvalidConfig, "feature cache has no records for " + slice_name(cond, lay));
    const auto sample = balanced_subsample(slice, cfg.per_class, derive_seed(cfg.seed, "subsample/" + cond, static_cast<std::uint64_t>(lay)));
    TsneConfig tc = cfg.tsne;
    tc.seed = derive_seed(cfg.seed, "tsne/" + cond, static_cast<std::uint64_t>(lay));
    tc.jobs = cfg.jobs;
    TsneResult result;
    rec.stage("tsne", [&] { result = run_tsne(feature_matrix(sample), tc); });
    if (result.below_min_trust) rec.warn("no restart reached min_trust; kept the lowest-KL restart");
    if (!result.bandwidth_failures.empty()) {
        rec.warn(std::to_string(result.bandwidth_failures.size()) + " row(s) missed the perplexity target");
    }

    rec.stage("write", [&] {
        std::string coords = "record_index,utterance_id,condition,layer,viseme,phoneme,x,y\n";
        std::vector<ScatterLabel> labels;
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const auto& r = sample.records()[i];
            coords += std::to_string(i) + "," + r.utterance_id + "," + r.condition + "," + std::to_string(r.layer) + "," +
                      r.viseme.str() + "," + r.phoneme.str() + "," + format_real(result.coords(i, 0)) + "," +
                      format_real(result.coords(i, 1)) + "\n";
            labels.push_back({r.viseme, r.phoneme});
        }
        rec.output("tsne_coords.csv", coords);

        nlohmann::ordered_json q;
        q["condition"] = cond;
        q["layer"] = lay;
        q["points"] = sample.size();
        q["final_kl"] = result.final_kl;
        q["trustworthiness_k12"] = result.trustworthiness_k12;
        q["restart_index"] = result.restart_index;
        q["kl_after_exaggeration"] = result.kl_after_exaggeration;
        q["below_min_trust"] = result.below_min_trust;
        q["bandwidth_failures"] = result.bandwidth_failures.size();
        q["restarts"] = nlohmann::ordered_json::array();
        for (const auto& r : result.restarts) {
            nlohmann::ordered_json o;
            o["seed"] = r.seed;
            o["failed"] = r.failed;
            if (r.failed) {
                o["failure"] = r.failure;
            } else {
                o["final_kl"] = r.final_kl;
                o["kl_after_exaggeration"] = r.kl_after_exaggeration;
                o["trustworthiness"] = r.trustworthiness;
            }
            o["degenerate_init"] = r.degenerate_init;
            q["restarts"].push_back(o);
        }
        q["kl_trace"] = nlohmann::ordered_json::array();
        for (const auto& s : result.kl_trace) q["kl_trace"].push_back({s.iteration, s.kl});
        auto tj = to_json(cfg)["tsne"];
        tj["seed"] = tc.seed;
        q["config"] = tj;
        rec.output("tsne_quality.json", q.dump(2) + "\n");

        PlotSpec spec;
        spec.kind = PlotKind::Scatter;
        spec.palette = default_palette(map);
        spec.title = "t-SNE " + cond + " layer " + std::to_string(lay);
        const auto plot = emit_scatter(result.coords, labels, spec);
        const auto base = plot_basename("scatter", cond, std::to_string(lay));
        rec.output(base + ".svg", plot.svg);
        rec.output(base + ".csv", plot.csv);
    });
    rec.finish();
    return result;
}

struct SweepResult {
    std::vector<EvalReport> reports;
    std::vector<std::string> failures;
};

/// Per (condition, layer): stratified held-out split, probe training with
/// early stopping, metrics on the held-out tokens. Slices run as parallel
/// jobs; a failing slice leaves an `.failed` marker and the rest continue.
inline SweepResult cmd_probe_sweep(RunConfig cfg, std::ostream& log = std::cerr) {
    RunRecorder rec("probe-sweep", cfg, log);
    FeatureDataset ds;
    VisemeMap map;
    rec.stage("load", [&] {
        map = load_viseme_map(cfg.viseme_map, &rec);
        ds = load_feature_cache(cfg, &rec);
        resolve_slices(cfg, ds);
    });
    const auto class_index = map.visemes();
    struct Job {
        std::string condition;
        int layer;
        std::optional<EvalReport> report;
        std::string model;
        std::string log;
        std::string error;
    };
    std::vector<Job> jobs;
    for (const auto& c : cfg.conditions)
        for (int l : cfg.layers) jobs.push_back({c, l, std::nullopt, {}, {}, {}});

    rec.stage("train", [&] {
        parallel_for(jobs.size(), cfg.jobs, [&](std::size_t k) {
            auto& job = jobs[k];
            const auto idx = static_cast<std::uint64_t>(job.layer);
            try {
                const auto slice = ds.slice(job.condition, job.layer);
                if (slice.empty()) throw Error(ErrorCode::InvalidConfig, "no records");
                auto [rest, held] = split_train_val(slice, cfg.eval_fraction, derive_seed(cfg.seed, "eval-split/" + job.condition, idx));
                auto [train, val] = split_train_val(rest, cfg.probe.val_fraction, derive_seed(cfg.seed, "val-split/" + job.condition, idx));
                ProbeConfig pc = cfg.probe;
                pc.input_dim = slice.dim();
                pc.classes = class_index.size();
                pc.seed = derive_seed(cfg.seed, "probe/" + job.condition, idx);
                auto [model, trace] = train_probe(to_labeled(train, class_index), to_labeled(val, class_index), pc, class_index);
                std::vector<VisemeLabel> truth;
                for (const auto& r : held.records()) truth.push_back(r.viseme);
                const auto predicted = predict(model, feature_matrix(held));
                job.report = evaluation_report(confusion(truth, predicted, class_index), job.condition, job.layer);
                job.model = serialize_model(model, pc);
                job.log = serialize_training_log(trace);
            } catch (const Error& e) {
                job.error = e.what();
            }
        });
    });

    SweepResult out;
    rec.stage("write", [&] {
        std::string f1_rows(kF1ByLayerHeader);
        f1_rows += "\n";
        for (const auto& job : jobs) {
            const auto name = slice_name(job.condition, job.layer);
            if (!job.report) {
                rec.fail(name + ": " + job.error);
                rec.output("eval_report_" + name + ".failed", job.error + "\n");
                out.failures.push_back(name + ": " + job.error);
                continue;
            }
            rec.output("eval_report_" + name + ".json", to_json(*job.report).dump(2) + "\n");
            rec.output("training_log_" + name + ".csv", job.log);
            rec.output("probe_" + name + ".model", job.model);
            for (const auto& w : job.report->warnings) rec.warn(name + ": " + w);
            f1_rows += f1_by_layer_rows(*job.report);
            out.reports.push_back(*job.report);
        }
        rec.output("f1_by_layer.csv", f1_rows);
        if (!out.reports.empty()) {
            PlotSpec spec;
            spec.kind = PlotKind::Line;
            spec.palette = default_palette(map);
            spec.title = "Viseme classification accuracy by layer";
            const auto acc = emit_layer_curves(out.reports, CurveMetric::Accuracy, spec);
            rec.output(plot_basename("accuracy", "all", "all") + ".svg", acc.svg);
            rec.output(plot_basename("accuracy", "all", "all") + ".csv", acc.csv);
            for (const auto& w : acc.warnings) rec.warn(w);
            spec.title = "Per-viseme F1 by layer";
            const auto f1 = emit_layer_curves(out.reports, CurveMetric::F1, spec);
            rec.output(plot_basename("f1", "all", "all") + ".svg", f1.svg);
            rec.output(plot_basename("f1", "all", "all") + ".csv", f1.csv);
        }
    });
    rec.finish();
    return out;
}

/// Re-renders plots from files already in the output directory: token
/// histograms from the feature cache, layer curves from eval reports, the
/// scatter from tsne_coords.csv.
inline std::vector<std::string> cmd_report(RunConfig cfg, const std::vector<std::string>& visemes = {},
                                           std::ostream& log = std::cerr) {
    RunRecorder rec("report", cfg, log);
    const auto map = load_viseme_map(cfg.viseme_map, &rec);
    PlotSpec spec;
    spec.palette = default_palette(map);
    rec.stage("histograms", [&] {
        if (!fs::exists(cfg.features_path())) return;
        const auto ds = load_feature_cache(cfg, &rec);
        resolve_slices(cfg, ds);
        spec.kind = PlotKind::Histogram;
        for (const auto& c : cfg.conditions) {
            for (int l : cfg.layers) {
                spec.title = "Tokens per viseme, " + c + " layer " + std::to_string(l);
                const auto plot = emit_histogram(ds.slice(c, l), spec);
                const auto base = plot_basename("histogram", c, std::to_string(l));
                rec.output(base + ".svg", plot.svg);
                rec.output(base + ".csv", plot.csv);
            }
        }
    });
    rec.stage("curves", [&] {
        std::vector<fs::path> files;
        if (fs::exists(cfg.out)) {
            for (const auto& e : fs::directory_iterator(cfg.out)) {
                const auto name = e.path().filename().string();
                if (name.starts_with("eval_report_") && name.ends_with(".json")) files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        std::vector<EvalReport> reports;
        for (const auto& f : files) {
            const auto bytes = read_file(f);
            rec.input(f, bytes);
            try {
                reports.push_back(eval_report_from_json(nlohmann::json::parse(bytes)));
            } catch (const nlohmann::json::exception& e) {
                throw Error(ErrorCode::MalformedCache, f.string() + ": " + e.what());
            }
        }
        if (reports.empty()) return;
        std::stable_sort(reports.begin(), reports.end(), [&](const EvalReport& a, const EvalReport& b) {
            auto rank = [&](const std::string& c) {
                auto it = std::find(cfg.conditions.begin(), cfg.conditions.end(), c);
                return it == cfg.conditions.end() ? cfg.conditions.size() : static_cast<std::size_t>(it - cfg.conditions.begin());
            };
            if (rank(a.condition) != rank(b.condition)) return rank(a.condition) < rank(b.condition);
            if (a.condition != b.condition) return a.condition < b.condition;
            return a.layer < b.layer;
        });
        spec.kind = PlotKind::Line;
        spec.title = "Viseme classification accuracy by layer";
        const auto acc = emit_layer_curves(reports, CurveMetric::Accuracy, spec);
        rec.output(plot_basename("accuracy", "all", "all") + ".svg", acc.svg);
        rec.output(plot_basename("accuracy", "all", "all") + ".csv", acc.csv);
        for (const auto& w : acc.warnings) rec.warn(w);
        spec.title = "Per-viseme F1 by layer";
        const auto f1 = emit_layer_curves(reports, CurveMetric::F1, spec, visemes);
        std::string tag = "all";
        if (!visemes.empty()) {
            tag.clear();
            for (const auto& v : visemes) tag += (tag.empty() ? "" : "-") + v;
        }
        rec.output(plot_basename("f1", "all", tag) + ".svg", f1.svg);
        rec.output(plot_basename("f1", "all", tag) + ".csv", f1.csv);
    });
    rec.stage("scatter", [&] {
        const auto path = cfg.out / "tsne_coords.csv";
        if (!fs::exists(path)) return;
        const auto bytes = read_file(path);
        rec.input(path, bytes);
        const auto lines = split_lines(bytes);
        MatrixD coords(lines.size() > 1 ? lines.size() - 1 : 0, 2);
        std::vector<ScatterLabel> labels;
        std::string cond, lay;
        std::size_t row = 0;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (trim(lines[i]).empty()) continue;
            const auto f = split(lines[i], ',');
            const auto x = f.size() == 8 ? parse_real(f[6]) : std::nullopt;
            const auto y = f.size() == 8 ? parse_real(f[7]) : std::nullopt;
            if (!x || !y) throw Error(ErrorCode::MalformedRow, path.string() + ": line " + std::to_string(i + 1));
            coords(row, 0) = *x;
            coords(row, 1) = *y;
            ++row;
            cond = std::string(f[2]);
            lay = std::string(f[3]);
            labels.push_back({VisemeLabel(std::string(f[4])), PhonemeLabel(std::string(f[5]))});
        }
        if (labels.empty()) return;
        MatrixD used(row, 2);
        std::copy(coords.data().begin(), coords.data().begin() + static_cast<std::ptrdiff_t>(2 * row), used.data().begin());
        spec.kind = PlotKind::Scatter;
        spec.title = "t-SNE " + cond + " layer " + lay;
        const auto plot = emit_scatter(used, labels, spec);
        const auto base = plot_basename("scatter", cond, lay);
        rec.output(base + ".svg", plot.svg);
        rec.output(base + ".csv", plot.csv);
    });
    rec.finish();
    return rec.outputs();
}

/// Writes a synthetic corpus plus a run_config.json that points at it.
inline SyntheticCorpus cmd_synth(const SynthSpec& spec, const fs::path& out, const std::string& viseme_map = "lee") {
    const auto map = load_viseme_map(viseme_map);
    auto corpus = generate_synthetic_corpus(spec, map);
    corpus.write_to(out);
    RunConfig cfg;
    cfg.manifest = "manifest.json";
    cfg.alignment = "alignment.csv";
    cfg.viseme_map = viseme_map;
    cfg.layers = spec.layers;
    for (const auto& c : spec.conditions) cfg.conditions.push_back(c.name);
    cfg.seed = spec.seed;
    auto j = to_json(cfg);
    j.erase("features");
    j.erase("out");
    write_file_atomic(out / "run_config.json", j.dump(2) + "\n");
    return corpus;
}

struct ValidationSummary {
    std::size_t segments = 0;
    std::size_t utterances = 0;
    std::size_t containers = 0;
};

/// Format checks only: map, alignment, manifest and every container the
/// configured slices need. Nothing is written.
inline ValidationSummary cmd_validate(RunConfig cfg) {
    ValidationSummary s;
    const auto map = load_viseme_map(cfg.viseme_map);
    const auto segments = load_alignment(cfg.alignment);
    for (const auto& seg : segments) {
        try {
            map_to_viseme(seg.phoneme, map);
        } catch (const Error& e) {
            throw e.with_context(cfg.alignment.string() + " (" + seg.utterance_id + ")");
        }
    }
    s.segments = segments.size();
    const auto manifest = load_manifest(cfg.manifest);
    resolve_slices(cfg, manifest);
    std::vector<std::string> utterances;
    for (const auto& seg : segments) {
        if (utterances.empty() || utterances.back() != seg.utterance_id) utterances.push_back(seg.utterance_id);
    }
    s.utterances = utterances.size();
    for (const auto& u : utterances) {
        for (const auto& c : cfg.conditions) {
            for (int l : cfg.layers) {
                if (!manifest.find(u, c, l)) {
                    throw Error(ErrorCode::MissingUtterance, u + " (condition " + c + ", layer " + std::to_string(l) + ")");
                }
            }
        }
    }
    for (const auto& e : manifest.entries()) {
        const auto path = manifest.resolve(e);
        try {
            manifest.read(e);
        } catch (const Error& err) {
            throw err.with_context(path.string());
        }
        ++s.containers;
    }
    return s;
}

}  // namespace vscope

#endif  // VSCOPE_PIPELINE_HPP
