#include "laca/filter.hpp"

#include <fstream>

#include "laca/backend.hpp"
#include "laca/corpus.hpp"
#include "laca/errors.hpp"
#include "laca/hash.hpp"
#include "laca/text.hpp"

namespace laca {

std::string_view to_string(RejectionStage stage) {
  switch (stage) {
    case RejectionStage::EmptyPrediction: return "empty_prediction";
    case RejectionStage::MissingAspect: return "missing_aspect";
    case RejectionStage::InconsistentPrediction: return "inconsistent_prediction";
    case RejectionStage::GenerationFailed: return "generation_failed";
  }
  return "empty_prediction";
}

namespace {

std::optional<RejectionStage> parse_stage(std::string_view s) {
  for (auto stage : {RejectionStage::EmptyPrediction, RejectionStage::MissingAspect,
                     RejectionStage::InconsistentPrediction, RejectionStage::GenerationFailed}) {
    if (to_string(stage) == s) return stage;
  }
  return std::nullopt;
}

nlohmann::json keys_to_json(const std::vector<TupleKey>& keys) {
  auto arr = nlohmann::json::array();
  for (const auto& k : keys) {
    arr.push_back({{"aspect", k.aspect}, {"polarity", std::string(to_string(k.polarity))}});
  }
  return arr;
}

}  // namespace

std::string rejections_to_jsonl(std::span<const RejectionRecord> records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["stage"] = std::string(to_string(r.stage));
    j["details"] = r.details;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_rejections(std::span<const RejectionRecord> records, const std::filesystem::path& path) {
  write_file_atomic(path, rejections_to_jsonl(records));
}

std::vector<RejectionRecord> read_rejections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<RejectionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto stage = parse_stage(j.at("stage").get<std::string>());
      if (!stage) throw SchemaViolation("unknown rejection stage", line_no);
      out.push_back({j.at("id").get<std::string>(), *stage, j.value("details", nlohmann::json::object())});
    } catch (const nlohmann::json::exception& e) {
      throw SchemaViolation(e.what(), line_no);
    }
  }
  return out;
}

std::map<std::string, TupleSet> RemotePredictor::predict(const LanguageCode& lang,
                                                         std::span<const LabeledExample> examples) {
  return predict_batch(client_, model_, lang, examples);
}

FilterResult prefilter_predictions(const LabeledDataset& predicted) {
  FilterResult result;
  for (const auto& ex : predicted) {
    if (ex.tuples.empty()) {
      result.rejected.push_back({ex.id, RejectionStage::EmptyPrediction, nlohmann::json::object()});
    } else {
      result.kept.push_back(ex);
    }
  }
  return result;
}

bool contains_all_aspects(std::string_view text, const TupleSet& label) {
  const auto haystack = text::normalize(text);
  for (const auto& t : label) {
    if (haystack.find(text::normalize(t.aspect)) == std::string::npos) return false;
  }
  return true;
}

bool consistency_check(AbsaPredictor& predictor, const LabeledExample& generated) {
  const auto predictions = predictor.predict(generated.lang, std::span(&generated, 1));
  auto it = predictions.find(generated.id);
  if (it == predictions.end()) {
    throw ProtocolViolation("predictor returned nothing for '" + generated.id + "'");
  }
  return same_keys(it->second, generated.tuples);
}

FilterResult filter_generated(const LabeledDataset& pairs, AbsaPredictor& predictor) {
  FilterResult result;
  std::map<LanguageCode, LabeledDataset> survivors;
  // Indexed by input position so the report follows input order.
  std::vector<std::optional<RejectionRecord>> rejection(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    if (!contains_all_aspects(pair.text, pair.tuples)) {
      const auto haystack = text::normalize(pair.text);
      std::vector<std::string> missing;
      for (const auto& t : pair.tuples) {
        if (haystack.find(text::normalize(t.aspect)) == std::string::npos) missing.push_back(t.aspect);
      }
      rejection[i] = RejectionRecord{pair.id, RejectionStage::MissingAspect, {{"missing", missing}}};
      continue;
    }
    survivors[pair.lang].push_back(pair);
  }

  std::map<std::string, TupleSet> predicted;
  for (const auto& [lang, batch] : survivors) {
    auto p = predictor.predict(lang, batch);
    predicted.merge(p);
  }

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (rejection[i]) {
      result.rejected.push_back(std::move(*rejection[i]));
      continue;
    }
    const auto& pair = pairs[i];
    auto it = predicted.find(pair.id);
    if (it == predicted.end()) {
      throw ProtocolViolation("predictor returned nothing for '" + pair.id + "'");
    }
    if (same_keys(it->second, pair.tuples)) {
      auto kept = pair;
      kept.origin = Origin::Generated;
      result.kept.push_back(std::move(kept));
    } else {
      result.rejected.push_back({pair.id, RejectionStage::InconsistentPrediction,
                                 {{"expected", keys_to_json(pair.tuples.keys())},
                                  {"predicted", keys_to_json(it->second.keys())}}});
    }
  }
  return result;
}

}  // namespace laca
