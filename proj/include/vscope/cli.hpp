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


// Command-line front end. Kept in a header so tests can drive it in-process.

#ifndef VSCOPE_CLI_HPP
#define VSCOPE_CLI_HPP

#include <cstdlib>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vscope/pipeline.hpp"

namespace vscope {

namespace detail {

/// Short spellings accepted next to the dotted config paths.
inline const std::map<std::string, std::string>& cli_aliases() {
    static const std::map<std::string, std::string> a = {
        {"restarts", "tsne.restarts"},     {"min-trust", "tsne.min_trust"}, {"perplexity", "tsne.perplexity"},
        {"per-class", "subsample.per_class"}, {"viseme-map", "viseme_map"},  {"eval-fraction", "eval_fraction"},
    };
    return a;
}

struct ConfigFlags {
    std::string config;
    std::map<std::string, std::string> values;  // config key -> raw text

    void attach(CLI::App& app) {
        app.add_option("--config", config, "JSON run configuration");
        for (const auto& key : config_keys()) {
            std::string names = "--" + key;
            for (const auto& [alias, target] : cli_aliases())
                if (target == key) names += ",--" + alias;
            app.add_option(names, values[key], "override " + key)->type_name("VALUE");
        }
    }

    RunConfig resolve(const CLI::App& app) const {
        std::vector<std::pair<std::string, std::string>> overrides;
        for (const auto& [key, text] : values) {
            if (app.get_option("--" + key)->count() > 0) overrides.emplace_back(key, text);
        }
        std::optional<fs::path> file;
        if (!config.empty()) file = config;
        std::optional<std::string> env;
        if (const char* v = std::getenv("VSCOPE_OUT")) env = v;
        return load_run_config(file, overrides, env);
    }
};

}  // namespace detail

/// Runs one invocation. Returns the process exit code: 0 when every
/// requested output was written, 2 on any error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Viseme probing and t-SNE toolkit for audio-visual speech embeddings", "vscope"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    detail::ConfigFlags build_flags, tsne_flags, sweep_flags, report_flags, validate_flags;

    auto* build = app.add_subcommand("build-features", "alignment + embeddings -> mean-pooled token features");
    build_flags.attach(*build);

    auto* tsne = app.add_subcommand("tsne", "2-D t-SNE of one (condition, layer) slice");
    tsne_flags.attach(*tsne);
    std::optional<int> layer;
    std::optional<std::string> condition;
    tsne->add_option("--layer", layer, "layer to embed");
    tsne->add_option("--condition", condition, "condition to embed");

    auto* sweep = app.add_subcommand("probe-sweep", "train and evaluate one probe per (condition, layer)");
    sweep_flags.attach(*sweep);

    auto* report = app.add_subcommand("report", "re-render histograms, curves and scatter plots");
    report_flags.attach(*report);
    std::vector<std::string> visemes;
    report->add_option("--visemes", visemes, "visemes for the F1 curves")->delimiter(',');

    auto* synth = app.add_subcommand("synth", "write a synthetic corpus");
    std::string spec_path, synth_out, synth_map = "lee";
    std::optional<std::uint64_t> synth_seed;
    synth->add_option("--spec", spec_path, "synthetic corpus spec (JSON)");
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--viseme-map,--viseme_map", synth_map, "viseme map");
    synth->add_option("--seed", synth_seed, "overrides the spec seed");

    auto* validate = app.add_subcommand("validate", "check input formats without writing anything");
    validate_flags.attach(*validate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*build) {
            const auto ds = cmd_build_features(build_flags.resolve(*build), err);
            out << "wrote " << ds.size() << " records\n";
        } else if (*tsne) {
            const auto r = cmd_tsne(tsne_flags.resolve(*tsne), condition, layer, err);
            out << "restart " << r.restart_index << ": KL " << format_real(r.final_kl) << ", trustworthiness "
                << format_real(r.trustworthiness_k12) << "\n";
        } else if (*sweep) {
            const auto r = cmd_probe_sweep(sweep_flags.resolve(*sweep), err);
            for (const auto& rep : r.reports) {
                out << rep.condition << " layer " << rep.layer << ": accuracy " << format_real(rep.accuracy) << "\n";
            }
            if (!r.failures.empty()) {
                err << r.failures.size() << " probe job(s) failed\n";
                return 2;
            }
        } else if (*report) {
            const auto files = cmd_report(report_flags.resolve(*report), visemes, err);
            out << "wrote " << files.size() << " files\n";
        } else if (*synth) {
            if (synth_out.empty()) {
                if (const char* v = std::getenv("VSCOPE_OUT")) synth_out = v;
            }
            if (synth_out.empty()) throw Error(ErrorCode::InvalidConfig, "no output directory (--out or VSCOPE_OUT)");
            SynthSpec spec;
            if (!spec_path.empty()) {
                try {
                    spec = synth_spec_from_json(nlohmann::json::parse(read_file(spec_path)));
                } catch (const nlohmann::json::exception& e) {
                    throw Error(ErrorCode::InvalidConfig, spec_path + ": " + e.what());
                }
            }
            if (synth_seed) spec.seed = *synth_seed;
            const auto corpus = cmd_synth(spec, synth_out, synth_map);
            out << "wrote " << corpus.segments.size() << " segments, " << corpus.sequences.size() << " embedding files\n";
        } else if (*validate) {
            const auto s = cmd_validate(validate_flags.resolve(*validate));
            out << "ok: " << s.segments << " segments, " << s.utterances << " utterances, " << s.containers
                << " embedding files\n";
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace vscope

#endif  // VSCOPE_CLI_HPP
