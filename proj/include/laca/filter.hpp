#pragma once

// Quality controls on pseudo-labelled data: drop empty predictions before
// generation, then keep only generated sentences that mention every requested
// aspect and that the ABSA model labels exactly as requested.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "laca/types.hpp"

namespace laca {

class BackendClient;

enum class RejectionStage { EmptyPrediction, MissingAspect, InconsistentPrediction, GenerationFailed };

std::string_view to_string(RejectionStage stage);

struct RejectionRecord {
  std::string id;
  RejectionStage stage;
  nlohmann::json details = nlohmann::json::object();
};

/// {"id": str, "stage": str, "details": object} per line.
std::string rejections_to_jsonl(std::span<const RejectionRecord> records);
void write_rejections(std::span<const RejectionRecord> records, const std::filesystem::path& path);
std::vector<RejectionRecord> read_rejections(const std::filesystem::path& path);

/// Anything that can label sentences: the remote model or a mock.
class AbsaPredictor {
 public:
  virtual ~AbsaPredictor() = default;
  /// Keyed by example id; one entry per input example.
  virtual std::map<std::string, TupleSet> predict(const LanguageCode& lang,
                                                  std::span<const LabeledExample> examples) = 0;
};

/// AbsaPredictor backed by a /v1/predict service and a fixed model id.
class RemotePredictor : public AbsaPredictor {
 public:
  RemotePredictor(BackendClient& client, std::string model)
      : client_(client), model_(std::move(model)) {}

  std::map<std::string, TupleSet> predict(const LanguageCode& lang,
                                          std::span<const LabeledExample> examples) override;

 private:
  BackendClient& client_;
  std::string model_;
};

struct FilterResult {
  LabeledDataset kept;
  std::vector<RejectionRecord> rejected;
};

/// Removes predictions without any tuple.
FilterResult prefilter_predictions(const LabeledDataset& predicted);

/// Every aspect occurs in the text as a case-insensitive substring after
/// whitespace normalization of both sides.
bool contains_all_aspects(std::string_view text, const TupleSet& label);

/// The model's prediction on the text equals the label as a set of
/// (normalized aspect, polarity); spans are ignored.
bool consistency_check(AbsaPredictor& predictor, const LabeledExample& generated);

/// Containment first; only survivors are sent to the predictor, in one batch
/// per language. Kept examples get origin=generated.
FilterResult filter_generated(const LabeledDataset& pairs, AbsaPredictor& predictor);

}  // namespace laca
