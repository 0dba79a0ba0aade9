#pragma once

// Exact-match micro-F1, multi-seed aggregation and the error taxonomy
// (boundary / missing / extra / polarity).

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "laca/types.hpp"

namespace laca {

/// How boundaries were compared: spans when both sides carry one, otherwise
/// normalized aspect strings. Mixed when a dataset pair used both.
enum class MatchMode { Span, String, Mixed };

std::string_view to_string(MatchMode mode);

struct EvalReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  MatchMode match_mode = MatchMode::String;

  static EvalReport from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
};

nlohmann::ordered_json report_to_json(const EvalReport& report);

/// Same aspect boundary: equal spans if both have one, else equal
/// normalized aspect strings.
bool same_boundary(const SentimentTuple& a, const SentimentTuple& b);

/// Size of a maximum one-to-one matching between tuples with identical
/// boundary and polarity.
std::size_t count_true_positives(const TupleSet& gold, const TupleSet& pred);

/// Pools counts over all sentences. Gold and pred must hold the same ids
/// (any order) in the same language; throws IdMismatch otherwise.
EvalReport micro_f1(const LabeledDataset& gold, const LabeledDataset& pred);

struct AggregateReport {
  std::vector<double> f1s;
  double mean = 0.0;
  /// Population standard deviation.
  double std = 0.0;
};

/// Throws EmptyInput.
AggregateReport aggregate_runs(std::span<const EvalReport> reports);
nlohmann::ordered_json aggregate_to_json(const AggregateReport& report);

struct ErrorTaxonomy {
  std::size_t boundary = 0;
  std::size_t missing = 0;
  std::size_t extra = 0;
  std::size_t polarity = 0;
  /// Not errors; kept for accounting. Each gold tuple is exactly one of
  /// correct, exact_polarity, boundary-matched or missing.
  std::size_t correct = 0;
  std::size_t exact_polarity = 0;

  ErrorTaxonomy& operator+=(const ErrorTaxonomy& o);
  bool operator==(const ErrorTaxonomy&) const = default;
};

nlohmann::ordered_json taxonomy_to_json(const ErrorTaxonomy& t);

/// Three passes: a maximum matching on exact boundary and polarity (correct);
/// greedy exact boundary with wrong polarity (one polarity error); then
/// greedy largest character overlap
/// among the rest, ties to the leftmost gold then leftmost prediction (one
/// boundary error, plus a polarity error if polarities differ). Leftover
/// gold tuples are missing, leftover predictions extra.
///
/// Overlap uses spans when both tuples have them; otherwise it is the length
/// of the shorter normalized aspect when one contains the other.
ErrorTaxonomy classify_errors(const TupleSet& gold, const TupleSet& pred);
ErrorTaxonomy classify_errors(const LabeledExample& gold, const LabeledExample& pred);
/// Summed over id-aligned datasets; throws IdMismatch.
ErrorTaxonomy classify_errors(const LabeledDataset& gold, const LabeledDataset& pred);

}  // namespace laca
