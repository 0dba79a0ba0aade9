#include "laca/genformat.hpp"

#include "laca/errors.hpp"
#include "laca/text.hpp"

namespace laca {

namespace {

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c; }

// Markers are pure ASCII, so a byte-wise ASCII-insensitive search is exact.
std::size_t find_ci(std::string_view haystack, std::string_view needle, std::size_t from = 0) {
  if (needle.size() > haystack.size()) return std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < needle.size() && match; ++k) {
      match = ascii_lower(haystack[i + k]) == ascii_lower(needle[k]);
    }
    if (match) return i;
  }
  return std::string_view::npos;
}

void check_aspect(const std::string& aspect) {
  if (aspect.empty() || text::trim(aspect) != aspect) {
    throw InvalidAspect("aspect '" + aspect + "' is empty or has surrounding whitespace");
  }
  for (auto marker : {kAspectMarker, kPolarityMarker, kSeparator}) {
    if (find_ci(aspect, marker) != std::string_view::npos) {
      throw InvalidAspect("aspect '" + aspect + "' contains the reserved marker " + std::string(marker));
    }
  }
}

}  // namespace

std::string serialize_tuples(std::span<const SentimentTuple> tuples) {
  if (tuples.empty()) throw EmptyTupleList();
  std::string out;
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    check_aspect(tuples[i].aspect);
    if (i > 0) {
      out += ' ';
      out += kSeparator;
      out += ' ';
    }
    out += kAspectMarker;
    out += ' ';
    out += tuples[i].aspect;
    out += ' ';
    out += kPolarityMarker;
    out += ' ';
    out += to_string(tuples[i].polarity);
  }
  return out;
}

std::string serialize_tuples(const TupleSet& tuples) { return serialize_tuples(tuples.items()); }

std::string_view to_string(ParseIssueKind kind) {
  switch (kind) {
    case ParseIssueKind::EmptySegment: return "EmptySegment";
    case ParseIssueKind::MissingAspectMarker: return "MissingAspectMarker";
    case ParseIssueKind::MissingPolarityMarker: return "MissingPolarityMarker";
    case ParseIssueKind::EmptyAspect: return "EmptyAspect";
    case ParseIssueKind::UnknownPolarity: return "UnknownPolarity";
  }
  return "EmptySegment";
}

ParsedTuples parse_tuples(std::string_view input) {
  ParsedTuples result;
  std::vector<std::string_view> segments;
  std::size_t start = 0;
  for (;;) {
    const auto sep = find_ci(input, kSeparator, start);
    segments.push_back(input.substr(start, sep == std::string_view::npos ? sep : sep - start));
    if (sep == std::string_view::npos) break;
    start = sep + kSeparator.size();
  }

  for (std::size_t index = 0; index < segments.size(); ++index) {
    std::string segment;
    try {
      segment = text::trim(segments[index]);
    } catch (const InvalidUtf8&) {
      result.issues.push_back({ParseIssueKind::EmptySegment, "invalid UTF-8", index});
      continue;
    }
    if (segment.empty()) {
      result.issues.push_back({ParseIssueKind::EmptySegment, "", index});
      continue;
    }
    const auto a = find_ci(segment, kAspectMarker);
    if (a == std::string_view::npos) {
      result.issues.push_back({ParseIssueKind::MissingAspectMarker, segment, index});
      continue;
    }
    const auto p = find_ci(segment, kPolarityMarker, a + kAspectMarker.size());
    if (p == std::string_view::npos) {
      result.issues.push_back({ParseIssueKind::MissingPolarityMarker, segment, index});
      continue;
    }
    SentimentTuple tuple;
    tuple.aspect = text::trim(std::string_view(segment).substr(a + kAspectMarker.size(),
                                                                p - a - kAspectMarker.size()));
    if (tuple.aspect.empty()) {
      result.issues.push_back({ParseIssueKind::EmptyAspect, segment, index});
      continue;
    }
    std::string word = text::trim(std::string_view(segment).substr(p + kPolarityMarker.size()));
    while (!word.empty() && (word.back() == '.' || word.back() == ',' || word.back() == '!')) {
      word.pop_back();
    }
    const auto polarity = parse_polarity(text::casefold(word));
    if (!polarity) {
      result.issues.push_back({ParseIssueKind::UnknownPolarity, word, index});
      continue;
    }
    tuple.polarity = *polarity;
    result.tuples.insert(std::move(tuple));
  }
  return result;
}

}  // namespace laca
