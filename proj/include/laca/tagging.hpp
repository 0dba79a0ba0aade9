#pragma once

// Sequence-labelling view of ABSA: word tokens with character offsets and
// BIO tags fused with polarity (B-POS, I-NEG, ...).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "laca/types.hpp"

namespace laca {

struct Token {
  std::string text;
  std::size_t from = 0;  // scalar-value offsets into the sentence
  std::size_t to = 0;

  bool operator==(const Token&) const = default;
};

enum class Tag : std::uint8_t { O, BPos, IPos, BNeg, INeg, BNeu, INeu };

using TagSequence = std::vector<Tag>;

/// "O", "B-POS", "I-POS", "B-NEG", "I-NEG", "B-NEU", "I-NEU".
std::string_view to_string(Tag tag);
std::optional<Tag> parse_tag(std::string_view s);

Tag begin_tag(Polarity p);
Tag inside_tag(Polarity p);
bool is_begin(Tag t);
bool is_inside(Tag t);
/// Polarity carried by a non-O tag.
Polarity tag_polarity(Tag t);

/// True iff every I-x directly follows B-x or I-x of the same polarity.
bool is_well_formed(std::span<const Tag> tags);

/// Splits on whitespace, then peels leading and trailing punctuation off each
/// chunk one character at a time. Punctuation inside a chunk ("don't",
/// "e-mail") stays put.
std::vector<Token> tokenize(std::string_view text);

/// Tags every token covered by a tuple span. Spans that cut into a token are
/// widened to the token edges (logged); span-less tuples are located by
/// matching their tokens against the first unclaimed occurrence.
/// Throws OverlappingAspects or UnalignableSpan.
TagSequence encode_bio(std::span<const Token> tokens, const TupleSet& tuples);

/// Maximal B-x (I-x)* runs become tuples whose aspect is the source slice.
/// Ill-formed input is repaired first.
TupleSet decode_bio(std::string_view text, std::span<const Token> tokens, std::span<const Tag> tags);

/// Rewrites any orphan I-x to B-x. Idempotent.
TagSequence repair_tags(std::span<const Tag> tags);

}  // namespace laca
