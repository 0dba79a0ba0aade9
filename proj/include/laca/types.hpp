#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace laca {

enum class Polarity : std::uint8_t { Positive, Negative, Neutral };

inline constexpr std::array<Polarity, 3> kPolarities = {
    Polarity::Positive, Polarity::Negative, Polarity::Neutral};

/// "positive" / "negative" / "neutral".
std::string_view to_string(Polarity p);
/// Exact match on the canonical lowercase word.
std::optional<Polarity> parse_polarity(std::string_view word);

/// ISO-639-1 code. Restricted to the six benchmark languages unless
/// `allow_any` is passed, in which case any two lowercase ASCII letters pass.
class LanguageCode {
 public:
  static LanguageCode parse(std::string_view code, bool allow_any = false);

  const std::string& str() const { return code_; }
  /// English display name used in prompts; falls back to the code itself.
  std::string_view english_name() const;

  auto operator<=>(const LanguageCode&) const = default;

 private:
  explicit LanguageCode(std::string code) : code_(std::move(code)) {}
  std::string code_;
};

/// Half-open [from, to) in Unicode scalar values.
struct CharSpan {
  std::size_t from = 0;
  std::size_t to = 0;

  std::size_t length() const { return to - from; }
  auto operator<=>(const CharSpan&) const = default;
};

struct SentimentTuple {
  std::string aspect;
  Polarity polarity = Polarity::Positive;
  std::optional<CharSpan> span;
  /// Opaque annotation metadata (e.g. "FOOD#QUALITY"); never used for scoring.
  std::optional<std::string> category;

  bool operator==(const SentimentTuple&) const = default;
};

/// Identity of a tuple under set semantics: normalized aspect plus polarity.
struct TupleKey {
  std::string aspect;
  Polarity polarity;

  auto operator<=>(const TupleKey&) const = default;
};

TupleKey key_of(const SentimentTuple& t);

/// Set of tuples deduplicated on TupleKey, kept in a canonical order
/// (spanned tuples by position first, then span-less ones by key). When two
/// tuples share a key the one that sorts first is kept; ties keep the
/// existing element.
class TupleSet {
 public:
  using const_iterator = std::vector<SentimentTuple>::const_iterator;

  TupleSet() = default;
  TupleSet(std::initializer_list<SentimentTuple> tuples);
  explicit TupleSet(const std::vector<SentimentTuple>& tuples);

  /// Returns false when an equal-keyed tuple was already present.
  bool insert(SentimentTuple t);
  bool contains(const TupleKey& key) const;

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const_iterator begin() const { return items_.begin(); }
  const_iterator end() const { return items_.end(); }
  const SentimentTuple& operator[](std::size_t i) const { return items_[i]; }
  const std::vector<SentimentTuple>& items() const { return items_; }

  std::vector<TupleKey> keys() const;

  bool operator==(const TupleSet&) const = default;

 private:
  std::vector<SentimentTuple> items_;
};

/// Key-set equality: spans and categories are ignored.
bool same_keys(const TupleSet& a, const TupleSet& b);

enum class Origin : std::uint8_t { Gold, Predicted, Generated };

std::string_view to_string(Origin o);
std::optional<Origin> parse_origin(std::string_view word);

struct LabeledExample {
  std::string id;
  LanguageCode lang = LanguageCode::parse("en");
  std::string text;
  TupleSet tuples;
  Origin origin = Origin::Gold;

  bool operator==(const LabeledExample&) const = default;
};

using LabeledDataset = std::vector<LabeledExample>;

/// Throws DuplicateId on the first repeated id.
void check_unique_ids(const LabeledDataset& dataset);

/// Checks a span against the text it annotates: in range and the covered
/// slice equals the aspect after whitespace normalization.
bool span_matches(std::string_view text, const CharSpan& span, std::string_view aspect);

}  // namespace laca
