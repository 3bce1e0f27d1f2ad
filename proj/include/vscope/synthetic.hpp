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


// Synthetic corpora with known class geometry. Each viseme gets a fixed
// direction; a condition scales the class means per layer, so the same
// tokens can be made more or less separable.

#ifndef VSCOPE_SYNTHETIC_HPP
#define VSCOPE_SYNTHETIC_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <tuple>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vscope/alignment.hpp"
#include "vscope/common.hpp"
#include "vscope/embedding.hpp"
#include "vscope/random.hpp"

namespace vscope {

struct SynthCondition {
    std::string name;
    /// Distance between any two class means at the first layer.
    double separation = 8.0;
    /// Added to `separation` for each subsequent layer in the layer list.
    double separation_step = 0.0;
    /// Per-dimension token spread around the class mean.
    double sigma = 1.0;
};

struct SynthSpec {
    std::size_t dim = 16;
    std::size_t tokens_per_class = 100;
    std::map<std::string, std::size_t> class_tokens;  // per-viseme overrides
    std::vector<SynthCondition> conditions = {{"clean-av", 8.0, 0.0, 1.0}};
    std::vector<int> layers = {0};
    std::size_t tokens_per_utterance = 20;
    std::size_t min_frames = 3;
    std::size_t max_frames = 9;
    double fps = kDefaultFps;
    /// Per-frame jitter on top of the token vector.
    double frame_noise = 0.0;
    std::uint64_t seed = 0;

    double separation_at(const SynthCondition& c, std::size_t layer_pos) const {
        return c.separation + c.separation_step * static_cast<double>(layer_pos);
    }
};

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    s.dim = j.value("dim", s.dim);
    s.tokens_per_class = j.value("tokens_per_class", s.tokens_per_class);
    if (j.contains("class_tokens")) s.class_tokens = j["class_tokens"].get<std::map<std::string, std::size_t>>();
    if (j.contains("conditions")) {
        s.conditions.clear();
        for (const auto& c : j["conditions"]) {
            SynthCondition sc;
            sc.name = c.at("name").get<std::string>();
            sc.separation = c.value("separation", sc.separation);
            sc.separation_step = c.value("separation_step", sc.separation_step);
            sc.sigma = c.value("sigma", sc.sigma);
            s.conditions.push_back(std::move(sc));
        }
    }
    if (j.contains("layers")) s.layers = j["layers"].get<std::vector<int>>();
    s.tokens_per_utterance = j.value("tokens_per_utterance", s.tokens_per_utterance);
    s.min_frames = j.value("min_frames", s.min_frames);
    s.max_frames = j.value("max_frames", s.max_frames);
    s.fps = j.value("fps", s.fps);
    s.frame_noise = j.value("frame_noise", s.frame_noise);
    s.seed = j.value("seed", s.seed);
    if (s.dim == 0 || s.min_frames == 0 || s.max_frames < s.min_frames || s.tokens_per_utterance == 0 ||
        s.conditions.empty() || s.layers.empty() || !(s.fps > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "invalid synthetic corpus spec");
    }
    return s;
}

struct SyntheticCorpus {
    std::vector<AlignmentSegment> segments;
    std::vector<EmbeddingSequence> sequences;
    /// Unit class directions, one row per viseme in map order.
    MatrixD directions;

    const EmbeddingSequence* find(const std::string& utt, const std::string& condition, int layer) const {
        for (const auto& s : sequences) {
            if (s.utterance_id == utt && s.condition == condition && s.layer == layer) return &s;
        }
        return nullptr;
    }

    /// In-memory provider for build_dataset.
    auto provider() const {
        std::map<std::tuple<std::string, std::string, int>, const EmbeddingSequence*> index;
        for (const auto& s : sequences) index[{s.utterance_id, s.condition, s.layer}] = &s;
        return [index = std::move(index)](const std::string& utt, const std::string& condition,
                                          int layer) -> std::optional<EmbeddingSequence> {
            auto it = index.find({utt, condition, layer});
            if (it == index.end()) return std::nullopt;
            return *it->second;
        };
    }

    /// Writes alignment.csv, manifest.json and emb/*.emb1 under `dir`.
    void write_to(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir / "emb");
        write_file_atomic(dir / "alignment.csv", serialize_alignment_csv(segments));
        CorpusManifest manifest;
        for (const auto& s : sequences) {
            ManifestEntry e;
            e.utterance_id = s.utterance_id;
            e.condition = s.condition;
            e.layer = s.layer;
            e.fps = s.fps;
            e.path = "emb/" + s.utterance_id + "_" + s.condition + "_" + std::to_string(s.layer) + ".emb1";
            e.dim = static_cast<std::uint32_t>(s.frames.cols());
            write_file_atomic(dir / e.path, encode_emb1(s.frames));
            manifest.add(std::move(e));
        }
        write_file_atomic(dir / "manifest.json", manifest.to_json());
    }
};

/// Orthonormal class directions when dim >= classes (Gram-Schmidt on
/// Gaussian draws); normalized Gaussian draws otherwise.
inline MatrixD synth_directions(std::size_t classes, std::size_t dim, Rng& rng) {
    MatrixD q(classes, dim);
    for (std::size_t c = 0; c < classes; ++c) {
        auto row = q.row(c);
        while (true) {
            for (auto& v : row) v = rng.normal();
            if (dim >= classes) {
                for (std::size_t p = 0; p < c; ++p) {
                    auto prev = q.row(p);
                    double dot = 0.0;
                    for (std::size_t d = 0; d < dim; ++d) dot += row[d] * prev[d];
                    for (std::size_t d = 0; d < dim; ++d) row[d] -= dot * prev[d];
                }
            }
            double norm = 0.0;
            for (double v : row) norm += v * v;
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (auto& v : row) v /= norm;
                break;
            }
        }
    }
    return q;
}

/// Token t of class c under (condition, layer) has vector
/// (separation / sqrt 2) * q_c + sigma * z_t, where z_t is shared by all
/// conditions and layers; each frame adds `frame_noise` jitter.
inline SyntheticCorpus generate_synthetic_corpus(const SynthSpec& spec, const VisemeMap& map = lee_map()) {
    Rng rng(derive_seed(spec.seed, "synth"));
    SyntheticCorpus out;
    const auto& visemes = map.visemes();
    out.directions = synth_directions(visemes.size(), spec.dim, rng);

    struct Token {
        std::size_t cls;
        PhonemeLabel phoneme;
        std::size_t frames;
        std::vector<double> z;
    };
    std::vector<Token> tokens;
    for (std::size_t c = 0; c < visemes.size(); ++c) {
        auto it = spec.class_tokens.find(visemes[c].str());
        const std::size_t n = it == spec.class_tokens.end() ? spec.tokens_per_class : it->second;
        const auto phonemes = map.phonemes_of(visemes[c]);
        if (phonemes.empty() && n > 0) {
            throw Error(ErrorCode::InvalidConfig, "viseme " + visemes[c].str() + " has no phonemes");
        }
        for (std::size_t k = 0; k < n; ++k) tokens.push_back({c, phonemes[k % phonemes.size()], 0, {}});
    }
    rng.shuffle(std::span<Token>(tokens));
    for (auto& t : tokens) {
        t.frames = spec.min_frames + static_cast<std::size_t>(rng.below(spec.max_frames - spec.min_frames + 1));
        t.z.resize(spec.dim);
        for (auto& v : t.z) v = rng.normal();
    }

    const std::size_t n_utt = (tokens.size() + spec.tokens_per_utterance - 1) / spec.tokens_per_utterance;
    for (std::size_t u = 0; u < n_utt; ++u) {
        char name[32];
        std::snprintf(name, sizeof(name), "utt%05zu", u);
        const std::size_t first = u * spec.tokens_per_utterance;
        const std::size_t last = std::min(tokens.size(), first + spec.tokens_per_utterance);
        std::size_t offset = 0;
        for (std::size_t t = first; t < last; ++t) {
            out.segments.push_back({name, tokens[t].phoneme, static_cast<double>(offset) / spec.fps,
                                    static_cast<double>(offset + tokens[t].frames) / spec.fps});
            offset += tokens[t].frames;
        }
        for (std::size_t ci = 0; ci < spec.conditions.size(); ++ci) {
            const auto& cond = spec.conditions[ci];
            for (std::size_t li = 0; li < spec.layers.size(); ++li) {
                Rng jitter(derive_seed(spec.seed, "synth-frames", (u * spec.conditions.size() + ci) * spec.layers.size() + li));
                const double scale = spec.separation_at(cond, li) / std::sqrt(2.0);
                EmbeddingSequence seq;
                seq.utterance_id = name;
                seq.condition = cond.name;
                seq.layer = spec.layers[li];
                seq.fps = spec.fps;
                seq.frames = Matrix<float>(offset, spec.dim);
                std::size_t row = 0;
                for (std::size_t t = first; t < last; ++t) {
                    const auto dir = out.directions.row(tokens[t].cls);
                    for (std::size_t f = 0; f < tokens[t].frames; ++f, ++row) {
                        auto frame = seq.frames.row(row);
                        for (std::size_t d = 0; d < spec.dim; ++d) {
                            double v = scale * dir[d] + cond.sigma * tokens[t].z[d];
                            if (spec.frame_noise > 0.0) v += spec.frame_noise * jitter.normal();
                            frame[d] = static_cast<float>(v);
                        }
                    }
                }
                out.sequences.push_back(std::move(seq));
            }
        }
    }
    return out;
}

}  // namespace vscope

#endif  // VSCOPE_SYNTHETIC_HPP
