#pragma once

// Text rendering of tuple sets used by generative backbones and prompts:
//   "[A] tea [P] positive [;] [A] service [P] negative"

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "laca/types.hpp"

namespace laca {

inline constexpr std::string_view kAspectMarker = "[A]";
inline constexpr std::string_view kPolarityMarker = "[P]";
inline constexpr std::string_view kSeparator = "[;]";

/// Throws EmptyTupleList, or InvalidAspect when an aspect is empty, has
/// surrounding whitespace, or contains a marker (any casing).
std::string serialize_tuples(std::span<const SentimentTuple> tuples);
std::string serialize_tuples(const TupleSet& tuples);

enum class ParseIssueKind {
  EmptySegment,
  MissingAspectMarker,
  MissingPolarityMarker,
  EmptyAspect,
  UnknownPolarity,
};

std::string_view to_string(ParseIssueKind kind);

struct ParseIssue {
  ParseIssueKind kind;
  /// Offending text, e.g. the unrecognised polarity word.
  std::string detail;
  /// Zero-based index of the dropped segment.
  std::size_t segment = 0;

  bool operator==(const ParseIssue&) const = default;
};

struct ParsedTuples {
  TupleSet tuples;
  std::vector<ParseIssue> issues;
};

/// Best-effort parse; one issue per dropped segment, never throws on content.
/// Markers and polarity words match case-insensitively and whitespace around
/// them is ignored. Text before the first [A] of a segment is ignored.
ParsedTuples parse_tuples(std::string_view text);

}  // namespace laca
