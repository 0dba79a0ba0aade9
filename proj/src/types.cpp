#include "laca/types.hpp"

#include <algorithm>
#include <unordered_set>

#include "laca/errors.hpp"
#include "laca/text.hpp"

namespace laca {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Backend: return 3;
    case ErrorKind::Data: return 4;
  }
  return 1;
}

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::Positive: return "positive";
    case Polarity::Negative: return "negative";
    case Polarity::Neutral: return "neutral";
  }
  return "positive";
}

std::optional<Polarity> parse_polarity(std::string_view word) {
  for (auto p : kPolarities) {
    if (to_string(p) == word) return p;
  }
  return std::nullopt;
}

namespace {

struct LanguageInfo {
  std::string_view code;
  std::string_view name;
};

constexpr std::array<LanguageInfo, 6> kLanguages = {{
    {"en", "English"},
    {"es", "Spanish"},
    {"fr", "French"},
    {"nl", "Dutch"},
    {"ru", "Russian"},
    {"tr", "Turkish"},
}};

}  // namespace

LanguageCode LanguageCode::parse(std::string_view code, bool allow_any) {
  for (const auto& info : kLanguages) {
    if (info.code == code) return LanguageCode(std::string(code));
  }
  const bool two_letters = code.size() == 2 &&
                           std::all_of(code.begin(), code.end(),
                                       [](char c) { return c >= 'a' && c <= 'z'; });
  if (allow_any && two_letters) return LanguageCode(std::string(code));
  throw DataError("unsupported language code '" + std::string(code) + "'" +
                  (two_letters ? " (pass --allow-any-lang to accept it)" : ""));
}

std::string_view LanguageCode::english_name() const {
  for (const auto& info : kLanguages) {
    if (info.code == code_) return info.name;
  }
  return code_;
}

TupleKey key_of(const SentimentTuple& t) { return {text::normalize(t.aspect), t.polarity}; }

namespace {

// Strict weak order used for the canonical TupleSet layout.
bool sorts_before(const SentimentTuple& a, const TupleKey& ka,
                  const SentimentTuple& b, const TupleKey& kb) {
  if (a.span && b.span) {
    if (*a.span != *b.span) return *a.span < *b.span;
    return ka < kb;
  }
  if (a.span.has_value() != b.span.has_value()) return a.span.has_value();
  return ka < kb;
}

}  // namespace

TupleSet::TupleSet(std::initializer_list<SentimentTuple> tuples) {
  for (const auto& t : tuples) insert(t);
}

TupleSet::TupleSet(const std::vector<SentimentTuple>& tuples) {
  for (const auto& t : tuples) insert(t);
}

bool TupleSet::insert(SentimentTuple t) {
  const TupleKey key = key_of(t);
  auto existing = std::find_if(items_.begin(), items_.end(),
                               [&](const SentimentTuple& x) { return key_of(x) == key; });
  const bool replacing = existing != items_.end();
  if (replacing) {
    if (!sorts_before(t, key, *existing, key)) return false;
    items_.erase(existing);
  }
  auto pos = std::find_if(items_.begin(), items_.end(), [&](const SentimentTuple& x) {
    return sorts_before(t, key, x, key_of(x));
  });
  items_.insert(pos, std::move(t));
  return !replacing;
}

bool TupleSet::contains(const TupleKey& key) const {
  return std::any_of(items_.begin(), items_.end(),
                     [&](const SentimentTuple& x) { return key_of(x) == key; });
}

std::vector<TupleKey> TupleSet::keys() const {
  std::vector<TupleKey> out;
  out.reserve(items_.size());
  for (const auto& t : items_) out.push_back(key_of(t));
  return out;
}

bool same_keys(const TupleSet& a, const TupleSet& b) {
  auto ka = a.keys();
  auto kb = b.keys();
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  return ka == kb;
}

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::Gold: return "gold";
    case Origin::Predicted: return "predicted";
    case Origin::Generated: return "generated";
  }
  return "gold";
}

std::optional<Origin> parse_origin(std::string_view word) {
  for (auto o : {Origin::Gold, Origin::Predicted, Origin::Generated}) {
    if (to_string(o) == word) return o;
  }
  return std::nullopt;
}

void check_unique_ids(const LabeledDataset& dataset) {
  std::unordered_set<std::string_view> seen;
  for (const auto& ex : dataset) {
    if (!seen.insert(ex.id).second) throw DuplicateId(ex.id);
  }
}

bool span_matches(std::string_view text, const CharSpan& span, std::string_view aspect) {
  if (span.from >= span.to) return false;
  const auto wide = text::to_utf32(text);
  if (span.to > wide.size()) return false;
  const auto covered = text::to_utf8(std::u32string_view(wide).substr(span.from, span.length()));
  return text::trim(covered) == covered &&
         text::collapse_whitespace(covered) == text::collapse_whitespace(aspect);
}

}  // namespace laca
