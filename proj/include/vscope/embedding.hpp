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


#ifndef VSCOPE_EMBEDDING_HPP
#define VSCOPE_EMBEDDING_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "vscope/common.hpp"
#include "vscope/error.hpp"

namespace vscope {

inline constexpr double kDefaultFps = 25.0;

/// Frame embeddings of one utterance for one (condition, layer).
struct EmbeddingSequence {
    std::string utterance_id;
    std::string condition;
    int layer = 0;
    double fps = kDefaultFps;
    Matrix<float> frames;  // T x D
};

namespace emb1 {

inline constexpr std::string_view kMagic = "EMB1";
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + static_cast<std::size_t>(i)])) << (8 * i);
    }
    return v;
}

struct Header {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
};

inline Header read_header(std::string_view bytes) {
    if (bytes.size() < kHeaderBytes || bytes.substr(0, 4) != kMagic) {
        throw Error(ErrorCode::BadMagic, "missing EMB1 magic");
    }
    if (auto version = get_u32(bytes, 4); version != kVersion) {
        throw Error(ErrorCode::BadMagic, "unsupported EMB1 version " + std::to_string(version));
    }
    return {get_u32(bytes, 8), get_u32(bytes, 12)};
}

}  // namespace emb1

/// Encodes a matrix as EMB1: magic, u32 version, u32 T, u32 D, then T*D
/// little-endian binary32 values in row-major order.
inline std::string encode_emb1(const Matrix<float>& m) {
    std::string out;
    out.reserve(emb1::kHeaderBytes + 4 * m.data().size());
    out += emb1::kMagic;
    emb1::put_u32(out, emb1::kVersion);
    emb1::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    emb1::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (float v : m.data()) emb1::put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

/// Decodes one EMB1 blob starting at `offset`; advances `offset` past it.
/// Rejects non-finite payload values.
inline Matrix<float> decode_emb1(std::string_view bytes, std::size_t& offset) {
    auto rest = bytes.substr(offset);
    auto header = emb1::read_header(rest);
    const std::size_t count = static_cast<std::size_t>(header.rows) * header.cols;
    if (header.rows == 0 || header.cols == 0) throw Error(ErrorCode::ShapeMismatch, "EMB1 with zero extent");
    if (rest.size() < emb1::kHeaderBytes + 4 * count) {
        throw Error(ErrorCode::ShapeMismatch, "EMB1 payload shorter than " + std::to_string(header.rows) + "x" +
                                                  std::to_string(header.cols));
    }
    Matrix<float> m(header.rows, header.cols);
    for (std::size_t i = 0; i < count; ++i) {
        float v = std::bit_cast<float>(emb1::get_u32(rest, emb1::kHeaderBytes + 4 * i));
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFiniteValue,
                        "row " + std::to_string(i / header.cols) + ", col " + std::to_string(i % header.cols));
        }
        m.data()[i] = v;
    }
    offset += emb1::kHeaderBytes + 4 * count;
    return m;
}

inline Matrix<float> decode_emb1(std::string_view bytes) {
    std::size_t offset = 0;
    auto m = decode_emb1(bytes, offset);
    if (offset != bytes.size()) throw Error(ErrorCode::ShapeMismatch, "trailing bytes after EMB1 payload");
    return m;
}

/// One corpus manifest row. `dim` and `frames`, when present, are checked
/// against the container header.
struct ManifestEntry {
    std::string utterance_id;
    std::string condition;
    int layer = 0;
    double fps = kDefaultFps;
    std::string path;
    std::optional<std::uint32_t> dim;
    std::optional<std::uint32_t> frames;
};

inline EmbeddingSequence read_embedding_container(std::string_view bytes, const ManifestEntry& entry) {
    auto header = emb1::read_header(bytes);
    if ((entry.dim && *entry.dim != header.cols) || (entry.frames && *entry.frames != header.rows)) {
        throw Error(ErrorCode::ShapeMismatch, entry.path + ": header " + std::to_string(header.rows) + "x" +
                                                  std::to_string(header.cols) + " disagrees with manifest");
    }
    if (!(entry.fps > 0.0) || !std::isfinite(entry.fps)) {
        throw Error(ErrorCode::MalformedManifest, entry.path + ": fps must be positive");
    }
    EmbeddingSequence seq;
    seq.utterance_id = entry.utterance_id;
    seq.condition = entry.condition;
    seq.layer = entry.layer;
    seq.fps = entry.fps;
    try {
        seq.frames = decode_emb1(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), entry.path + ": " + e.what());
    }
    return seq;
}

/// Corpus manifest: `{"entries": [{utterance_id, condition, layer, fps, path}]}`.
/// Relative paths resolve against the manifest's directory.
class CorpusManifest {
public:
    using Key = std::tuple<std::string, std::string, int>;

    CorpusManifest() = default;

    static CorpusManifest parse(std::string_view text, const std::filesystem::path& base_dir = {}) {
        CorpusManifest out;
        out.base_dir_ = base_dir;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::MalformedManifest, e.what());
        }
        const nlohmann::json* entries = &doc;
        if (doc.is_object()) {
            if (!doc.contains("entries")) throw Error(ErrorCode::MalformedManifest, "missing 'entries'");
            entries = &doc["entries"];
        }
        if (!entries->is_array()) throw Error(ErrorCode::MalformedManifest, "'entries' must be an array");
        for (const auto& e : *entries) {
            try {
                ManifestEntry m;
                m.utterance_id = e.at("utterance_id").get<std::string>();
                m.condition = e.at("condition").get<std::string>();
                m.layer = e.at("layer").get<int>();
                m.fps = e.value("fps", kDefaultFps);
                m.path = e.at("path").get<std::string>();
                if (e.contains("dim")) m.dim = e["dim"].get<std::uint32_t>();
                if (e.contains("frames")) m.frames = e["frames"].get<std::uint32_t>();
                out.add(std::move(m));
            } catch (const nlohmann::json::exception& ex) {
                throw Error(ErrorCode::MalformedManifest, ex.what());
            }
        }
        return out;
    }

    static CorpusManifest load(const std::filesystem::path& path) {
        return parse(read_file(path), path.parent_path());
    }

    void add(ManifestEntry entry) {
        Key key{entry.utterance_id, entry.condition, entry.layer};
        if (index_.contains(key)) {
            throw Error(ErrorCode::MalformedManifest, "duplicate entry for " + entry.utterance_id + "/" +
                                                          entry.condition + "/" + std::to_string(entry.layer));
        }
        index_.emplace(std::move(key), entries_.size());
        entries_.push_back(std::move(entry));
    }

    const ManifestEntry* find(const std::string& utt, const std::string& condition, int layer) const {
        auto it = index_.find(Key{utt, condition, layer});
        return it == index_.end() ? nullptr : &entries_[it->second];
    }

    const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
    const std::filesystem::path& base_dir() const noexcept { return base_dir_; }

    std::filesystem::path resolve(const ManifestEntry& e) const {
        std::filesystem::path p(e.path);
        return p.is_absolute() ? p : base_dir_ / p;
    }

    EmbeddingSequence read(const ManifestEntry& e) const {
        return read_embedding_container(read_file(resolve(e)), e);
    }

    std::string to_json() const {
        nlohmann::ordered_json doc;
        doc["version"] = 1;
        doc["entries"] = nlohmann::ordered_json::array();
        for (const auto& e : entries_) {
            nlohmann::ordered_json j;
            j["utterance_id"] = e.utterance_id;
            j["condition"] = e.condition;
            j["layer"] = e.layer;
            j["fps"] = e.fps;
            j["path"] = e.path;
            if (e.dim) j["dim"] = *e.dim;
            if (e.frames) j["frames"] = *e.frames;
            doc["entries"].push_back(std::move(j));
        }
        return doc.dump(2) + "\n";
    }

private:
    std::filesystem::path base_dir_;
    std::vector<ManifestEntry> entries_;
    std::map<Key, std::size_t> index_;
};

}  // namespace vscope

#endif  // VSCOPE_EMBEDDING_HPP
