#pragma once

// Dataset ingestion: SemEval-2016 ABSA XML and the JSONL interchange format.
//
// JSONL record layout, one object per line, keys in this order:
//   {"id": str, "lang": str, "text": str,
//    "tuples": [{"aspect": str, "polarity": "positive"|"negative"|"neutral",
//                "from": int?, "to": int?, "category": str?}],
//    "origin": "gold"|"predicted"|"generated"}

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "laca/types.hpp"

namespace laca {

/// An opinion whose offsets do not cover its target string. The whole
/// sentence is dropped when this happens.
struct OffsetIssue {
  std::string sentence_id;
  std::string target;
  CharSpan span;
};

struct XmlParseResult {
  LabeledDataset dataset;
  std::vector<OffsetIssue> offset_issues;
  /// Opinions with target="NULL" (implicit aspects), which are dropped.
  std::size_t null_targets = 0;
  /// Sentences skipped because of offset issues.
  std::size_t skipped_sentences = 0;
};

/// Every sentence element anywhere under the root becomes one gold example.
/// Throws MalformedXml or DuplicateId.
XmlParseResult parse_semeval_xml(std::istream& in, const LanguageCode& lang);
XmlParseResult parse_semeval_xml_file(const std::filesystem::path& path, const LanguageCode& lang);

struct JsonlOptions {
  bool allow_any_lang = false;
};

/// Throws SchemaViolation (with 1-based line number) or DuplicateId.
LabeledDataset read_jsonl(std::istream& in, const JsonlOptions& options = {});
LabeledDataset read_jsonl(const std::filesystem::path& path, const JsonlOptions& options = {});

void write_jsonl(const LabeledDataset& dataset, std::ostream& out);
void write_jsonl(const LabeledDataset& dataset, const std::filesystem::path& path);
std::string to_jsonl(const LabeledDataset& dataset);

nlohmann::ordered_json tuple_to_json(const SentimentTuple& t);
/// Parses a tuple object; `text`, when given, is used to validate the span.
/// Throws std::invalid_argument describing the first problem found.
SentimentTuple tuple_from_json(const nlohmann::json& j, const std::string* text = nullptr);

nlohmann::ordered_json example_to_json(const LabeledExample& ex);
LabeledExample example_from_json(const nlohmann::json& j, const JsonlOptions& options = {});

struct DatasetStats {
  std::size_t n_sentences = 0;
  std::size_t n_aspects = 0;
  /// Indexed by Polarity.
  std::array<std::size_t, 3> polarity_histogram{};

  std::size_t count(Polarity p) const { return polarity_histogram[static_cast<std::size_t>(p)]; }
  bool operator==(const DatasetStats&) const = default;
};

DatasetStats dataset_stats(const LabeledDataset& dataset);
nlohmann::ordered_json stats_to_json(const DatasetStats& stats);

}  // namespace laca
