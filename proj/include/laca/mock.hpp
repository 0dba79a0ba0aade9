#pragma once

// Deterministic in-process stand-ins for the ABSA and LLM services. They
// speak the same /v1 wire protocol as real servers, so the pipeline and the
// client are exercised end to end without models.

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "laca/backend.hpp"
#include "laca/filter.hpp"
#include "laca/types.hpp"

namespace laca::mock {

/// Normalized term -> polarity. Keys are casefolded tokens joined by single
/// spaces (see normalize_term).
using Lexicon = std::map<std::string, Polarity>;

std::string normalize_term(std::string_view term);
Lexicon make_lexicon(const std::map<std::string, Polarity>& raw);
Lexicon lexicon_from_json(const nlohmann::json& j);
nlohmann::ordered_json lexicon_to_json(const Lexicon& lexicon);

/// Majority polarity per aspect over a labelled dataset; ties go to the
/// earlier of positive, negative, neutral.
Lexicon learn_lexicon(const LabeledDataset& dataset);

/// Longest-match scan over tokens. Each hit becomes a tuple spanning the
/// matched tokens. With `use_cues`, a polarity adjective within the next three
/// tokens (the ones mock_llm_generate emits) overrides the lexicon polarity.
TupleSet mock_absa_predict(const Lexicon& lexicon, std::string_view text, bool use_cues = false);

/// Fixed per-language template, e.g. {(tea,pos)} -> "The tea was excellent."
/// Uses only function words and polarity adjectives besides the aspects.
/// Throws EmptyTupleList for an empty label.
std::string mock_llm_generate(const TupleSet& label, const LanguageCode& lang);

struct MockServiceOptions {
  /// Terms every model knows regardless of training.
  Lexicon base_lexicon;
  /// Where trained lexicons are persisted; empty keeps them in memory only.
  std::filesystem::path model_dir;
  bool use_cues = true;
  /// Fraction of generations that leave out one requested aspect.
  double drop_aspect_rate = 0.0;
  /// Fraction of generations that mention an extra, unrequested lexicon term.
  double extra_term_rate = 0.0;
  /// Fraction of generation requests that always answer HTTP 503.
  double generate_fail_rate = 0.0;
};

/// Serves /v1/predict, /v1/generate and /v1/train. Thread-safe. Fault
/// injection is a pure function of (seed, prompt), never of call order.
class MockService : public std::enable_shared_from_this<MockService> {
 public:
  explicit MockService(MockServiceOptions options);

  TransportResponse handle(const std::string& path, const std::string& body);
  /// Transport routing into this service; keeps the service alive.
  std::shared_ptr<Transport> transport();

  std::size_t calls(std::string_view path) const;

 private:
  TransportResponse predict(const nlohmann::json& body);
  TransportResponse generate(const nlohmann::json& body);
  TransportResponse train(const nlohmann::json& body);
  Lexicon model_lexicon(const std::string& model);

  MockServiceOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, Lexicon> models_;
  std::map<std::string, std::size_t, std::less<>> calls_;
};

/// In-process predictor over a fixed lexicon, counting how often it is asked.
class LexiconPredictor : public AbsaPredictor {
 public:
  explicit LexiconPredictor(Lexicon lexicon, bool use_cues = false)
      : lexicon_(std::move(lexicon)), use_cues_(use_cues) {}

  std::map<std::string, TupleSet> predict(const LanguageCode& lang,
                                          std::span<const LabeledExample> examples) override;

  std::size_t calls() const { return calls_; }
  std::size_t sentences_seen() const { return sentences_; }

 private:
  Lexicon lexicon_;
  bool use_cues_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> sentences_{0};
};

}  // namespace laca::mock
