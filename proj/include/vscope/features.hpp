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


// Turns aligned phoneme segments plus per-layer frame embeddings into one
// mean-pooled feature vector per phoneme token.

#ifndef VSCOPE_FEATURES_HPP
#define VSCOPE_FEATURES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vscope/alignment.hpp"
#include "vscope/common.hpp"
#include "vscope/embedding.hpp"
#include "vscope/error.hpp"
#include "vscope/random.hpp"

namespace vscope {

/// Half-open range of frame indices [begin, end).
struct FrameRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool empty() const noexcept { return end <= begin; }
    bool operator==(const FrameRange&) const = default;
};

inline double frame_center(std::size_t frame, double fps) { return (static_cast<double>(frame) + 0.5) / fps; }

/// Frames whose center time (f + 0.5) / fps lies in [seg.start, seg.end).
/// Centers increase with f, so the covered frames are contiguous.
inline FrameRange segment_to_frames(const AlignmentSegment& seg, double fps, std::size_t num_frames) {
    auto inside = [&](std::size_t f) {
        const double c = frame_center(f, fps);
        return c >= seg.start && c < seg.end;
    };
    // Estimate from the closed form, then settle with the exact predicate.
    double guess = std::ceil(seg.start * fps - 0.5);
    std::size_t first = guess <= 0.0 ? 0 : static_cast<std::size_t>(std::min(guess, static_cast<double>(num_frames)));
    while (first > 0 && frame_center(first - 1, fps) >= seg.start) --first;
    while (first < num_frames && frame_center(first, fps) < seg.start) ++first;
    std::size_t last = first;
    while (last < num_frames && inside(last)) ++last;
    if (last == first) {
        throw Error(ErrorCode::EmptyCoverage, seg.utterance_id + " [" + format_real(seg.start) + ", " +
                                                  format_real(seg.end) + ") covers no frame center");
    }
    return {first, last};
}

/// Drops the first and last floor(n/3) positions; n <= 2 keeps everything.
/// Returned positions index into the input range.
inline FrameRange trim_middle_third(std::size_t n) {
    assert(n >= 1);
    if (n <= 2) return {0, n};
    const std::size_t k = n / 3;
    return {k, n - k};
}

inline std::vector<std::size_t> trim_middle_third(std::span<const std::size_t> frames) {
    auto kept = trim_middle_third(frames.size());
    return {frames.begin() + static_cast<std::ptrdiff_t>(kept.begin), frames.begin() + static_cast<std::ptrdiff_t>(kept.end)};
}

/// Row mean of frames [range.begin, range.end), accumulated in double.
inline std::vector<double> mean_pool(const Matrix<float>& frames, FrameRange range) {
    assert(!range.empty() && range.end <= frames.rows());
    std::vector<double> acc(frames.cols(), 0.0);
    for (std::size_t r = range.begin; r < range.end; ++r) {
        auto row = frames.row(r);
        for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += static_cast<double>(row[c]);
    }
    const double inv = 1.0 / static_cast<double>(range.size());
    for (auto& v : acc) v *= inv;
    return acc;
}

inline std::vector<double> mean_pool(const Matrix<float>& frames) { return mean_pool(frames, {0, frames.rows()}); }

struct FeatureRecord {
    std::string utterance_id;
    std::string condition;
    int layer = 0;
    VisemeLabel viseme;
    PhonemeLabel phoneme;
    std::vector<double> vector;
    std::size_t first_frame = 0;  // inclusive
    std::size_t last_frame = 0;   // inclusive

    bool operator==(const FeatureRecord&) const = default;
};

/// Records plus per-viseme tallies; tallies are maintained by add().
class FeatureDataset {
public:
    void add(FeatureRecord r) {
        ++counts_[r.viseme.str()];
        records_.push_back(std::move(r));
    }

    const std::vector<FeatureRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const std::map<std::string, std::size_t>& class_counts() const noexcept { return counts_; }

    std::size_t dim() const noexcept { return records_.empty() ? 0 : records_.front().vector.size(); }

    /// Records of one (condition, layer) slice, original order kept.
    FeatureDataset slice(const std::string& condition, int layer) const {
        FeatureDataset out;
        for (const auto& r : records_) {
            if (r.condition == condition && r.layer == layer) out.add(r);
        }
        return out;
    }

    std::vector<std::string> conditions() const {
        std::vector<std::string> out;
        for (const auto& r : records_) {
            if (std::find(out.begin(), out.end(), r.condition) == out.end()) out.push_back(r.condition);
        }
        return out;
    }

    std::vector<int> layers() const {
        std::vector<int> out;
        for (const auto& r : records_) out.push_back(r.layer);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    bool operator==(const FeatureDataset& o) const { return records_ == o.records_; }

private:
    std::vector<FeatureRecord> records_;
    std::map<std::string, std::size_t> counts_;
};

/// Segments that covered no frame center, per (condition, layer) slice.
struct SkipRecord {
    std::string utterance_id;
    std::string condition;
    int layer = 0;
    double start = 0.0;
    double end = 0.0;
};

struct BuildResult {
    FeatureDataset dataset;
    std::vector<SkipRecord> skipped;
};

/// Provider signature: (utterance_id, condition, layer) -> sequence, or
/// nullopt when the corpus has no such entry.
template <typename Provider>
concept SequenceProvider = requires(Provider p, const std::string& s, int layer) {
    { p(s, s, layer) } -> std::convertible_to<std::optional<EmbeddingSequence>>;
};

/// One record per (segment, condition, layer) whose coverage is non-empty.
/// Output order: condition, layer, utterance (alignment order), segment.
/// Work is split across utterances; each worker fills its own slot.
template <SequenceProvider Provider>
BuildResult build_dataset(Provider&& provider, const std::vector<AlignmentSegment>& segments, const VisemeMap& map,
                          const std::vector<std::string>& conditions, const std::vector<int>& layers,
                          std::size_t jobs = 1) {
    std::vector<std::string> utterances;
    std::map<std::string, std::vector<const AlignmentSegment*>> by_utt;
    for (const auto& s : segments) {
        auto [it, inserted] = by_utt.try_emplace(s.utterance_id);
        if (inserted) utterances.push_back(s.utterance_id);
        it->second.push_back(&s);
    }
    std::vector<VisemeLabel> visemes;
    visemes.reserve(segments.size());
    for (const auto& s : segments) visemes.push_back(map_to_viseme(s.phoneme, map));

    struct Slot {
        std::vector<FeatureRecord> records;
        std::vector<SkipRecord> skipped;
    };
    const std::size_t per_slice = utterances.size();
    std::vector<Slot> slots(conditions.size() * layers.size() * per_slice);

    parallel_for(utterances.size(), jobs, [&](std::size_t u) {
        const auto& utt = utterances[u];
        for (std::size_t c = 0; c < conditions.size(); ++c) {
            for (std::size_t l = 0; l < layers.size(); ++l) {
                auto seq = provider(utt, conditions[c], layers[l]);
                if (!seq) {
                    throw Error(ErrorCode::MissingUtterance,
                                utt + " (condition " + conditions[c] + ", layer " + std::to_string(layers[l]) + ")");
                }
                auto& slot = slots[(c * layers.size() + l) * per_slice + u];
                for (const auto* seg : by_utt.at(utt)) {
                    FrameRange covered;
                    try {
                        covered = segment_to_frames(*seg, seq->fps, seq->frames.rows());
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::EmptyCoverage) throw;
                        slot.skipped.push_back({utt, conditions[c], layers[l], seg->start, seg->end});
                        continue;
                    }
                    auto kept = trim_middle_third(covered.size());
                    FrameRange range{covered.begin + kept.begin, covered.begin + kept.end};
                    FeatureRecord rec;
                    rec.utterance_id = utt;
                    rec.condition = conditions[c];
                    rec.layer = layers[l];
                    rec.viseme = visemes[static_cast<std::size_t>(seg - segments.data())];
                    rec.phoneme = seg->phoneme;
                    rec.vector = mean_pool(seq->frames, range);
                    rec.first_frame = range.begin;
                    rec.last_frame = range.end - 1;
                    slot.records.push_back(std::move(rec));
                }
            }
        }
    });

    BuildResult out;
    for (auto& slot : slots) {
        for (auto& r : slot.records) out.dataset.add(std::move(r));
        for (auto& s : slot.skipped) out.skipped.push_back(std::move(s));
    }
    return out;
}

/// Draws min(per_class, available) records per viseme without replacement.
/// Selected records keep their original relative order.
inline FeatureDataset balanced_subsample(const FeatureDataset& ds, std::size_t per_class, std::uint64_t seed) {
    assert(per_class >= 1);
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < ds.records().size(); ++i) members[ds.records()[i].viseme.str()].push_back(i);
    Rng rng(seed);
    std::vector<std::size_t> chosen;
    for (auto& [viseme, idx] : members) {
        if (idx.size() > per_class) {
            rng.shuffle(std::span<std::size_t>(idx));
            idx.resize(per_class);
        }
        chosen.insert(chosen.end(), idx.begin(), idx.end());
    }
    std::sort(chosen.begin(), chosen.end());
    FeatureDataset out;
    for (auto i : chosen) out.add(ds.records()[i]);
    return out;
}

/// Columnar cache: utterance_id,condition,layer,viseme,phoneme,first_frame,
/// last_frame,v0..v{D-1}. Values use the shortest round-trip decimal form.
inline std::string serialize_dataset_csv(const FeatureDataset& ds) {
    std::string out = "utterance_id,condition,layer,viseme,phoneme,first_frame,last_frame";
    for (std::size_t d = 0; d < ds.dim(); ++d) out += ",v" + std::to_string(d);
    out += "\n";
    for (const auto& r : ds.records()) {
        out += r.utterance_id + "," + r.condition + "," + std::to_string(r.layer) + "," + r.viseme.str() + "," +
               r.phoneme.str() + "," + std::to_string(r.first_frame) + "," + std::to_string(r.last_frame);
        for (double v : r.vector) {
            out += ",";
            out += format_real(v);
        }
        out += "\n";
    }
    return out;
}

inline FeatureDataset parse_dataset_csv(std::string_view text) {
    auto lines = split_lines(text);
    if (lines.empty()) throw Error(ErrorCode::MalformedCache, "empty feature cache");
    const auto header = split(lines[0], ',');
    if (header.size() < 7 || header[0] != "utterance_id" || header[6] != "last_frame") {
        throw Error(ErrorCode::MalformedCache, "unexpected header");
    }
    const std::size_t dim = header.size() - 7;
    FeatureDataset ds;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto f = split(lines[i], ',');
        auto fail = [&] { return Error(ErrorCode::MalformedCache, "line " + std::to_string(i + 1)); };
        if (f.size() != header.size()) throw fail();
        FeatureRecord r;
        r.utterance_id = std::string(f[0]);
        r.condition = std::string(f[1]);
        auto layer = parse_int<int>(f[2]);
        auto first = parse_int<std::size_t>(f[5]);
        auto last = parse_int<std::size_t>(f[6]);
        if (!layer || !first || !last || *last < *first) throw fail();
        r.layer = *layer;
        r.viseme = VisemeLabel(std::string(f[3]));
        r.phoneme = PhonemeLabel(std::string(f[4]));
        r.first_frame = *first;
        r.last_frame = *last;
        r.vector.resize(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            auto v = parse_real(f[7 + d]);
            if (!v || !std::isfinite(*v)) throw fail();
            r.vector[d] = *v;
        }
        ds.add(std::move(r));
    }
    return ds;
}

/// Stacks record vectors into an N x D matrix.
inline MatrixD feature_matrix(const FeatureDataset& ds) {
    MatrixD x(ds.size(), ds.dim());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& v = ds.records()[i].vector;
        std::copy(v.begin(), v.end(), x.row(i).begin());
    }
    return x;
}

}  // namespace vscope

#endif  // VSCOPE_FEATURES_HPP
