#include "laca/tagging.hpp"

#include <array>

#include <spdlog/spdlog.h>

#include "laca/errors.hpp"
#include "laca/text.hpp"

namespace laca {

namespace {

constexpr std::array<std::string_view, 7> kTagNames = {"O",     "B-POS", "I-POS", "B-NEG",
                                                       "I-NEG", "B-NEU", "I-NEU"};

}  // namespace

std::string_view to_string(Tag tag) { return kTagNames[static_cast<std::size_t>(tag)]; }

std::optional<Tag> parse_tag(std::string_view s) {
  for (std::size_t i = 0; i < kTagNames.size(); ++i) {
    if (kTagNames[i] == s) return static_cast<Tag>(i);
  }
  return std::nullopt;
}

Tag begin_tag(Polarity p) {
  switch (p) {
    case Polarity::Positive: return Tag::BPos;
    case Polarity::Negative: return Tag::BNeg;
    case Polarity::Neutral: return Tag::BNeu;
  }
  return Tag::O;
}

Tag inside_tag(Polarity p) { return static_cast<Tag>(static_cast<std::uint8_t>(begin_tag(p)) + 1); }

bool is_begin(Tag t) { return t == Tag::BPos || t == Tag::BNeg || t == Tag::BNeu; }
bool is_inside(Tag t) { return t == Tag::IPos || t == Tag::INeg || t == Tag::INeu; }

Polarity tag_polarity(Tag t) {
  switch (t) {
    case Tag::BNeg: case Tag::INeg: return Polarity::Negative;
    case Tag::BNeu: case Tag::INeu: return Polarity::Neutral;
    default: return Polarity::Positive;
  }
}

bool is_well_formed(std::span<const Tag> tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!is_inside(tags[i])) continue;
    if (i == 0 || tags[i - 1] == Tag::O || tag_polarity(tags[i - 1]) != tag_polarity(tags[i])) {
      return false;
    }
  }
  return true;
}

std::vector<Token> tokenize(std::string_view text) {
  const auto wide = text::to_utf32(text);
  std::vector<Token> tokens;
  auto emit = [&](std::size_t from, std::size_t to) {
    tokens.push_back({text::to_utf8(std::u32string_view(wide).substr(from, to - from)), from, to});
  };
  std::size_t i = 0;
  while (i < wide.size()) {
    if (text::is_space(wide[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    std::size_t end = i;
    while (end < wide.size() && !text::is_space(wide[end])) ++end;
    i = end;
    while (start < end && text::is_punct(wide[start])) {
      emit(start, start + 1);
      ++start;
    }
    std::size_t core_end = end;
    while (core_end > start && text::is_punct(wide[core_end - 1])) --core_end;
    if (core_end > start) emit(start, core_end);
    for (std::size_t p = core_end; p < end; ++p) emit(p, p + 1);
  }
  return tokens;
}

namespace {

struct TokenRange {
  std::size_t first;
  std::size_t last;  // inclusive
};

std::optional<TokenRange> align_span(std::span<const Token> tokens, const CharSpan& span) {
  std::optional<std::size_t> first;
  std::size_t last = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].to <= span.from || tokens[i].from >= span.to) continue;
    if (!first) first = i;
    last = i;
  }
  if (!first) return std::nullopt;
  return TokenRange{*first, last};
}

std::optional<TokenRange> locate_aspect(std::span<const Token> tokens, std::string_view aspect,
                                        const std::vector<bool>& claimed) {
  std::vector<std::string> needle;
  for (const auto& t : tokenize(aspect)) needle.push_back(text::casefold(t.text));
  if (needle.empty() || needle.size() > tokens.size()) return std::nullopt;
  for (std::size_t start = 0; start + needle.size() <= tokens.size(); ++start) {
    bool match = true;
    for (std::size_t k = 0; k < needle.size() && match; ++k) {
      match = !claimed[start + k] && text::casefold(tokens[start + k].text) == needle[k];
    }
    if (match) return TokenRange{start, start + needle.size() - 1};
  }
  return std::nullopt;
}

}  // namespace

TagSequence encode_bio(std::span<const Token> tokens, const TupleSet& tuples) {
  TagSequence tags(tokens.size(), Tag::O);
  std::vector<bool> claimed(tokens.size(), false);
  for (const auto& tuple : tuples) {
    std::optional<TokenRange> range;
    if (tuple.span) {
      range = align_span(tokens, *tuple.span);
      if (!range) {
        throw UnalignableSpan("span [" + std::to_string(tuple.span->from) + "," +
                              std::to_string(tuple.span->to) + ") of '" + tuple.aspect +
                              "' covers no token");
      }
      if (tokens[range->first].from != tuple.span->from || tokens[range->last].to != tuple.span->to) {
        spdlog::warn("span of '{}' snapped outward to token boundaries [{},{})", tuple.aspect,
                     tokens[range->first].from, tokens[range->last].to);
      }
    } else {
      range = locate_aspect(tokens, tuple.aspect, claimed);
      if (!range) throw UnalignableSpan("aspect '" + tuple.aspect + "' not found among tokens");
    }
    for (std::size_t i = range->first; i <= range->last; ++i) {
      if (claimed[i]) {
        throw OverlappingAspects("aspect '" + tuple.aspect + "' overlaps another aspect at token " +
                                 std::to_string(i));
      }
    }
    for (std::size_t i = range->first; i <= range->last; ++i) {
      claimed[i] = true;
      tags[i] = i == range->first ? begin_tag(tuple.polarity) : inside_tag(tuple.polarity);
    }
  }
  return tags;
}

TagSequence repair_tags(std::span<const Tag> tags) {
  TagSequence out(tags.begin(), tags.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!is_inside(out[i])) continue;
    const bool continues = i > 0 && out[i - 1] != Tag::O &&
                           tag_polarity(out[i - 1]) == tag_polarity(out[i]);
    if (!continues) out[i] = begin_tag(tag_polarity(out[i]));
  }
  return out;
}

TupleSet decode_bio(std::string_view text, std::span<const Token> tokens, std::span<const Tag> tags) {
  if (tags.size() != tokens.size()) {
    throw DataError("tag sequence length " + std::to_string(tags.size()) +
                    " does not match token count " + std::to_string(tokens.size()));
  }
  const auto repaired = repair_tags(tags);
  const auto wide = text::to_utf32(text);
  TupleSet out;
  std::size_t i = 0;
  while (i < repaired.size()) {
    if (!is_begin(repaired[i])) {
      ++i;
      continue;
    }
    const Polarity polarity = tag_polarity(repaired[i]);
    std::size_t j = i + 1;
    while (j < repaired.size() && repaired[j] == inside_tag(polarity)) ++j;
    CharSpan span{tokens[i].from, tokens[j - 1].to};
    SentimentTuple tuple;
    tuple.aspect = text::to_utf8(std::u32string_view(wide).substr(span.from, span.length()));
    tuple.polarity = polarity;
    tuple.span = span;
    out.insert(std::move(tuple));
    i = j;
  }
  return out;
}

}  // namespace laca
