#pragma once

// Seeded generators for property tests and independent reference oracles.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "laca/random.hpp"
#include "laca/tagging.hpp"
#include "laca/types.hpp"

namespace laca::testing {

/// Number of Unicode scalar values, counted from lead bytes only.
std::size_t count_scalars(std::string_view utf8);

struct SyntheticSentence {
  std::string text;
  /// Tokens as the tokenizer should see them, built alongside the text.
  std::vector<Token> tokens;
  /// Non-overlapping, token-aligned tuples over word tokens.
  std::vector<SentimentTuple> tuples;
};

/// Mixed-script words, runs of whitespace and attached punctuation.
SyntheticSentence random_sentence(Rng& rng);

/// Aspects of one to three words (including non-ASCII ones) joined by single
/// spaces; 1 to 6 tuples.
std::vector<SentimentTuple> random_tuple_list(Rng& rng);

/// Gold/pred pair over a small aspect pool so that collisions are common.
/// With `spans`, every tuple carries a span over a shared virtual sentence.
struct RandomPair {
  TupleSet gold;
  TupleSet pred;
};
RandomPair random_pair(Rng& rng, bool spans, std::size_t max_per_side = 5);

/// Maximum one-to-one matching by exhaustive search over assignments.
/// Boundary: equal spans when both sides have one, otherwise equal
/// ASCII-lowercased aspects.
std::size_t brute_force_true_positives(const std::vector<SentimentTuple>& gold,
                                       const std::vector<SentimentTuple>& pred);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Labelled source corpus, unlabelled target corpus and gold target test set
/// built from the mock templates, plus a matching base lexicon. Writes
/// config.json and returns its path.
struct CorpusSpec {
  std::size_t source = 40;
  std::size_t target = 60;
  std::size_t test = 20;
  std::string mode = "laca";
  double drop_aspect_rate = 0.1;
  double extra_term_rate = 0.1;
  double generate_fail_rate = 0.05;
  int max_in_flight = 4;
  std::uint64_t seed = 7;
};
std::filesystem::path write_synthetic_run(const std::filesystem::path& dir, const CorpusSpec& spec);

}  // namespace laca::testing
