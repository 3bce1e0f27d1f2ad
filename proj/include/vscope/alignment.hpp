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


// Forced-alignment ingestion: phoneme label normalization, phoneme-to-viseme
// taxonomies, and the flat alignment CSV carrier.

#ifndef VSCOPE_ALIGNMENT_HPP
#define VSCOPE_ALIGNMENT_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vscope/common.hpp"
#include "vscope/error.hpp"

namespace vscope {

/// Lowercase ARPAbet symbol with stress digits removed. Holds `[a-z]{1,3}`.
class PhonemeLabel {
public:
    PhonemeLabel() = default;
    explicit PhonemeLabel(std::string symbol) : symbol_(std::move(symbol)) {
        if (symbol_.empty()) throw Error(ErrorCode::EmptyLabel, "empty phoneme label");
        if (symbol_.size() > 3 ||
            !std::all_of(symbol_.begin(), symbol_.end(), [](char c) { return c >= 'a' && c <= 'z'; })) {
            throw Error(ErrorCode::UnknownCharacters, "phoneme label '" + symbol_ + "'");
        }
    }

    const std::string& str() const noexcept { return symbol_; }
    auto operator<=>(const PhonemeLabel&) const = default;

private:
    std::string symbol_;
};

class VisemeLabel {
public:
    VisemeLabel() = default;
    explicit VisemeLabel(std::string name) : name_(std::move(name)) {}

    const std::string& str() const noexcept { return name_; }
    auto operator<=>(const VisemeLabel&) const = default;

private:
    std::string name_;
};

/// Lowercases, strips surrounding whitespace and slashes, and drops trailing
/// stress digits (0/1/2): "AH0" -> "ah", "/ZH/" -> "zh".
inline PhonemeLabel normalize_phoneme(std::string_view raw) {
    auto s = trim(raw);
    while (!s.empty() && s.front() == '/') s.remove_prefix(1);
    while (!s.empty() && s.back() == '/') s.remove_suffix(1);
    s = trim(s);
    while (!s.empty() && (s.back() == '0' || s.back() == '1' || s.back() == '2')) s.remove_suffix(1);
    if (s.empty()) throw Error(ErrorCode::EmptyLabel, "label '" + std::string(raw) + "' is empty after normalization");
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (!std::isalpha(static_cast<unsigned char>(c))) {
            throw Error(ErrorCode::UnknownCharacters, "label '" + std::string(raw) + "'");
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return PhonemeLabel(std::move(out));
}

/// Many-to-one phoneme to viseme function. Visemes and phonemes keep their
/// insertion order, which fixes class indices and file serialization.
class VisemeMap {
public:
    VisemeMap() = default;
    explicit VisemeMap(std::string name) : name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }

    /// Adds an entry; a phoneme already present keeps its first viseme.
    /// Returns whether the entry was inserted.
    bool add(const PhonemeLabel& phoneme, const VisemeLabel& viseme) {
        add_viseme(viseme);
        if (lookup_.contains(phoneme.str())) return false;
        lookup_.emplace(phoneme.str(), viseme);
        entries_.emplace_back(phoneme, viseme);
        return true;
    }

    void add_viseme(const VisemeLabel& viseme) {
        if (std::find(visemes_.begin(), visemes_.end(), viseme) == visemes_.end()) visemes_.push_back(viseme);
    }

    std::optional<VisemeLabel> find(const PhonemeLabel& phoneme) const {
        auto it = lookup_.find(phoneme.str());
        if (it == lookup_.end()) return std::nullopt;
        return it->second;
    }

    const std::vector<VisemeLabel>& visemes() const noexcept { return visemes_; }
    const std::vector<std::pair<PhonemeLabel, VisemeLabel>>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    std::vector<PhonemeLabel> phonemes_of(const VisemeLabel& viseme) const {
        std::vector<PhonemeLabel> out;
        for (const auto& [p, v] : entries_) {
            if (v == viseme) out.push_back(p);
        }
        return out;
    }

    /// Same entries in the same order; the name is not compared.
    bool same_mapping(const VisemeMap& other) const {
        return entries_ == other.entries_ && visemes_ == other.visemes_;
    }

private:
    std::string name_;
    std::vector<VisemeLabel> visemes_;
    std::vector<std::pair<PhonemeLabel, VisemeLabel>> entries_;
    std::unordered_map<std::string, VisemeLabel> lookup_;
};

/// Lee's 14-class taxonomy: 39 ARPAbet phonemes plus silence.
inline const VisemeMap& lee_map() {
    static const VisemeMap instance = [] {
        static const std::vector<std::pair<std::string_view, std::vector<std::string_view>>> table = {
            {"F", {"f", "v"}},
            {"W", {"r", "w"}},
            {"P", {"b", "p", "m"}},
            {"K", {"g", "k", "ng", "n", "l", "y", "hh"}},
            {"T", {"t", "d", "s", "z", "dh", "th"}},
            {"CH", {"ch", "jh", "sh", "zh"}},
            {"IY", {"iy", "ih"}},
            {"EH", {"eh", "ey", "ae"}},
            {"AA", {"aa", "aw", "ay"}},
            {"AH", {"ah"}},
            {"AO", {"ao", "oy", "ow"}},
            {"UH", {"uh", "uw"}},
            {"ER", {"er"}},
            {"sil", {"sil"}},
        };
        VisemeMap map("lee");
        for (const auto& [viseme, phonemes] : table) {
            for (auto p : phonemes) map.add(PhonemeLabel(std::string(p)), VisemeLabel(std::string(viseme)));
        }
        return map;
    }();
    return instance;
}

inline VisemeLabel map_to_viseme(const PhonemeLabel& phoneme, const VisemeMap& map) {
    auto v = map.find(phoneme);
    if (!v) throw Error(ErrorCode::UnmappedPhoneme, "'" + phoneme.str() + "' has no viseme in map '" + map.name() + "'");
    return *v;
}

/// Parses `VISEME: ph1 ph2 ...` lines. `#` starts a comment; blank lines are
/// ignored; the first occurrence of a phoneme wins.
inline VisemeMap parse_viseme_map(std::string_view text, std::string name) {
    VisemeMap map(std::move(name));
    auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto line = lines[i];
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto colon = line.find(':');
        if (colon == std::string_view::npos) {
            throw Error(ErrorCode::MalformedVisemeMap, "line " + std::to_string(i + 1) + ": missing ':'");
        }
        auto viseme = trim(line.substr(0, colon));
        if (viseme.empty() || viseme.find_first_of(" \t") != std::string_view::npos) {
            throw Error(ErrorCode::MalformedVisemeMap, "line " + std::to_string(i + 1) + ": bad viseme name");
        }
        VisemeLabel v{std::string(viseme)};
        map.add_viseme(v);
        std::string_view rest = line.substr(colon + 1);
        std::size_t pos = 0;
        while (pos < rest.size()) {
            auto b = rest.find_first_not_of(" \t", pos);
            if (b == std::string_view::npos) break;
            auto e = rest.find_first_of(" \t", b);
            if (e == std::string_view::npos) e = rest.size();
            map.add(normalize_phoneme(rest.substr(b, e - b)), v);
            pos = e;
        }
    }
    return map;
}

inline std::string serialize_viseme_map(const VisemeMap& map) {
    std::string out = "# viseme map: " + map.name() + "\n";
    for (const auto& v : map.visemes()) {
        out += v.str() + ":";
        for (const auto& p : map.phonemes_of(v)) out += " " + p.str();
        out += "\n";
    }
    return out;
}

struct AlignmentSegment {
    std::string utterance_id;
    PhonemeLabel phoneme;
    double start = 0.0;  // seconds
    double end = 0.0;    // seconds, exclusive

    bool operator==(const AlignmentSegment&) const = default;
};

inline constexpr std::string_view kAlignmentHeader = "utterance_id,phoneme,start_s,end_s";

/// Parses the alignment CSV. The header row is optional. Segments come back
/// grouped by utterance (first-appearance order) and sorted by start time.
inline std::vector<AlignmentSegment> parse_alignment_csv(std::string_view text) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<AlignmentSegment>> by_utt;
    auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line_no = std::to_string(i + 1);
        auto line = lines[i];
        if (trim(line).empty()) continue;
        if (i == 0 && trim(line) == kAlignmentHeader) continue;
        auto fields = split(line, ',');
        if (fields.size() != 4) throw Error(ErrorCode::MalformedRow, "line " + line_no + ": expected 4 fields");
        auto utt = trim(fields[0]);
        if (utt.empty()) throw Error(ErrorCode::MalformedRow, "line " + line_no + ": empty utterance_id");
        auto start = parse_real(trim(fields[2]));
        auto end = parse_real(trim(fields[3]));
        if (!start || !end || !std::isfinite(*start) || !std::isfinite(*end) || *start < 0.0) {
            throw Error(ErrorCode::MalformedRow, "line " + line_no + ": bad time value");
        }
        if (*end <= *start) throw Error(ErrorCode::NonMonotoneTimes, "line " + line_no + ": end <= start");
        PhonemeLabel phoneme;
        try {
            phoneme = normalize_phoneme(fields[1]);
        } catch (const Error& e) {
            throw Error(e.code(), "line " + line_no + ": " + e.what());
        }
        std::string id(utt);
        auto [it, inserted] = by_utt.try_emplace(id);
        if (inserted) order.push_back(id);
        it->second.push_back({id, std::move(phoneme), *start, *end});
    }
    std::vector<AlignmentSegment> out;
    for (const auto& id : order) {
        auto& segs = by_utt[id];
        std::stable_sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
        for (std::size_t k = 1; k < segs.size(); ++k) {
            if (segs[k].start < segs[k - 1].end) {
                throw Error(ErrorCode::OverlappingSegments, "utterance " + id);
            }
        }
        for (auto& s : segs) out.push_back(std::move(s));
    }
    return out;
}

inline std::string serialize_alignment_csv(const std::vector<AlignmentSegment>& segments) {
    std::string out(kAlignmentHeader);
    out += "\n";
    for (const auto& s : segments) {
        out += s.utterance_id + "," + s.phoneme.str() + "," + format_real(s.start) + "," + format_real(s.end) + "\n";
    }
    return out;
}

}  // namespace vscope

#endif  // VSCOPE_ALIGNMENT_HPP
