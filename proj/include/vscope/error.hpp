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

#ifndef VSCOPE_ERROR_HPP
#define VSCOPE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace vscope {

/// Every failure the toolkit can report. The CLI maps any of these to exit
/// code 2.
enum class ErrorCode {
    // alignment
    EmptyLabel,
    UnknownCharacters,
    UnmappedPhoneme,
    MalformedRow,
    OverlappingSegments,
    NonMonotoneTimes,
    MalformedVisemeMap,
    // features
    BadMagic,
    ShapeMismatch,
    NonFiniteValue,
    EmptyCoverage,
    MissingUtterance,
    MalformedManifest,
    MalformedCache,
    // tsne
    ZeroVector,
    BandwidthSearchFailed,
    DegenerateCovariance,
    NonFiniteIterate,
    KTooLarge,
    InvalidConfig,
    // probe
    ClassTooSmall,
    NonFiniteLoss,
    MalformedModel,
    // metrics
    LengthMismatch,
    UnknownLabel,
    ClassIndexMismatch,
    // report
    PaletteIncomplete,
    // io
    IoError,
};

inline std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::EmptyLabel: return "EmptyLabel";
    case ErrorCode::UnknownCharacters: return "UnknownCharacters";
    case ErrorCode::UnmappedPhoneme: return "UnmappedPhoneme";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::OverlappingSegments: return "OverlappingSegments";
    case ErrorCode::NonMonotoneTimes: return "NonMonotoneTimes";
    case ErrorCode::MalformedVisemeMap: return "MalformedVisemeMap";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::EmptyCoverage: return "EmptyCoverage";
    case ErrorCode::MissingUtterance: return "MissingUtterance";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::MalformedCache: return "MalformedCache";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::BandwidthSearchFailed: return "BandwidthSearchFailed";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::NonFiniteIterate: return "NonFiniteIterate";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::MalformedModel: return "MalformedModel";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::ClassIndexMismatch: return "ClassIndexMismatch";
    case ErrorCode::PaletteIncomplete: return "PaletteIncomplete";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + detail), code_(code), detail_(detail) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

    /// Same code, detail prefixed with `context` (typically a file path).
    Error with_context(const std::string& context) const { return Error(code_, context + ": " + detail_); }

private:
    ErrorCode code_;
    std::string detail_;
};

}  // namespace vscope

#endif  // VSCOPE_ERROR_HPP
