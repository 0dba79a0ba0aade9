#include <doctest.h>

#include <filesystem>

#include "laca/errors.hpp"
#include "laca/filter.hpp"
#include "laca/mock.hpp"
#include "../support/synth.hpp"

using namespace laca;

namespace {

const auto kEs = LanguageCode::parse("es");
const auto kEn = LanguageCode::parse("en");

SentimentTuple tup(std::string aspect, Polarity p) { return {std::move(aspect), p, std::nullopt, std::nullopt}; }

LabeledExample ex(std::string id, std::string text, TupleSet tuples, LanguageCode lang = kEs) {
  return {std::move(id), lang, std::move(text), std::move(tuples), Origin::Predicted};
}

}  // namespace

TEST_CASE("prefilter drops empty predictions") {
  LabeledDataset all = {ex("a", "x", {tup("x", Polarity::Positive)}), ex("b", "y", {tup("y", Polarity::Negative)})};
  auto r = prefilter_predictions(all);
  CHECK(r.kept == all);
  CHECK(r.rejected.empty());

  LabeledDataset mixed = {ex("a", "x", {tup("x", Polarity::Positive)}), ex("b", "nada", {}),
                          ex("c", "z", {tup("z", Polarity::Neutral)})};
  r = prefilter_predictions(mixed);
  CHECK(r.kept.size() == 2);
  REQUIRE(r.rejected.size() == 1);
  CHECK(r.rejected[0].id == "b");
  CHECK(r.rejected[0].stage == RejectionStage::EmptyPrediction);

  r = prefilter_predictions({ex("a", "", {}), ex("b", "", {})});
  CHECK(r.kept.empty());
  CHECK(r.rejected.size() == 2);
}

TEST_CASE("containment check") {
  CHECK(contains_all_aspects("El servicio fue excelente", {tup("servicio", Polarity::Positive)}));
  CHECK(contains_all_aspects("Buen carta, paella deliciosa",
                             {tup("carta", Polarity::Positive), tup("paella", Polarity::Positive)}));
  CHECK_FALSE(contains_all_aspects("Great food", {tup("tea", Polarity::Positive)}));
  CHECK(contains_all_aspects("La CARTA  de\tvinos", {tup("carta de vinos", Polarity::Positive)}));
  CHECK(contains_all_aspects("anything", {}));
}

TEST_CASE("consistency check compares key sets") {
  const auto lexicon = mock::make_lexicon({{"servicio", Polarity::Positive}, {"comida", Polarity::Negative}});
  mock::LexiconPredictor predictor(lexicon);
  CHECK(consistency_check(predictor, ex("a", "El servicio fue rápido", {tup("servicio", Polarity::Positive)})));
  CHECK_FALSE(consistency_check(predictor, ex("b", "El servicio y la comida", {tup("servicio", Polarity::Positive)})));
  CHECK_FALSE(consistency_check(predictor, ex("c", "El servicio", {tup("servicio", Polarity::Negative)})));
}

TEST_CASE("containment failures never reach the predictor") {
  mock::LexiconPredictor predictor(mock::make_lexicon({{"servicio", Polarity::Positive}}));
  const auto r = filter_generated({ex("a", "La comida fue buena", {tup("servicio", Polarity::Positive)})}, predictor);
  CHECK(r.kept.empty());
  REQUIRE(r.rejected.size() == 1);
  CHECK(r.rejected[0].stage == RejectionStage::MissingAspect);
  CHECK(r.rejected[0].details["missing"] == nlohmann::json::array({"servicio"}));
  CHECK(predictor.calls() == 0);
}

TEST_CASE("a pair passing both checks is kept as generated") {
  mock::LexiconPredictor predictor(mock::make_lexicon({{"servicio", Polarity::Positive}}));
  const auto r = filter_generated({ex("a", "El servicio fue excelente", {tup("servicio", Polarity::Positive)})}, predictor);
  REQUIRE(r.kept.size() == 1);
  CHECK(r.kept[0].origin == Origin::Generated);
  CHECK(r.rejected.empty());
}

TEST_CASE("ten pairs with three designed to fail") {
  mock::LexiconPredictor predictor(
      mock::make_lexicon({{"servicio", Polarity::Positive}, {"comida", Polarity::Negative}, {"vino", Polarity::Neutral}}));
  LabeledDataset pairs;
  for (int i = 0; i < 7; ++i) {
    pairs.push_back(ex("ok" + std::to_string(i), "El servicio fue bueno", {tup("servicio", Polarity::Positive)}));
  }
  pairs.push_back(ex("missing", "Nada que decir", {tup("servicio", Polarity::Positive)}));
  pairs.push_back(ex("extra", "El servicio y el vino", {tup("servicio", Polarity::Positive)}));
  pairs.push_back(ex("polarity", "La comida", {tup("comida", Polarity::Positive)}));
  const auto r = filter_generated(pairs, predictor);
  CHECK(r.kept.size() == 7);
  REQUIRE(r.rejected.size() == 3);
  CHECK(r.rejected[0].id == "missing");
  CHECK(r.rejected[0].stage == RejectionStage::MissingAspect);
  CHECK(r.rejected[1].id == "extra");
  CHECK(r.rejected[1].stage == RejectionStage::InconsistentPrediction);
  CHECK(r.rejected[2].stage == RejectionStage::InconsistentPrediction);
  CHECK(r.rejected[2].details["predicted"][0]["polarity"] == "negative");
  CHECK(predictor.calls() == 1);
  CHECK(predictor.sentences_seen() == 9);
}

TEST_CASE("survivors are batched once per language") {
  mock::LexiconPredictor predictor(mock::make_lexicon({{"tea", Polarity::Positive}, {"té", Polarity::Positive}}));
  const auto r = filter_generated({ex("a", "El té", {tup("té", Polarity::Positive)}),
                                   ex("b", "The tea", {tup("tea", Polarity::Positive)}, kEn),
                                   ex("c", "Un té", {tup("té", Polarity::Positive)})},
                                  predictor);
  CHECK(r.kept.size() == 3);
  CHECK(r.kept[1].id == "b");
  CHECK(predictor.calls() == 2);
}

TEST_CASE("rejection records round trip through JSONL") {
  testing::TempDir dir("rej");
  std::vector<RejectionRecord> records = {{"a", RejectionStage::EmptyPrediction, nlohmann::json::object()},
                                          {"b", RejectionStage::MissingAspect, {{"missing", {"x"}}}},
                                          {"c", RejectionStage::GenerationFailed, {{"reason", "HTTP 503"}}}};
  write_rejections(records, dir / "r.jsonl");
  const auto back = read_rejections(dir / "r.jsonl");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == records[i].id);
    CHECK(back[i].stage == records[i].stage);
    CHECK(back[i].details == records[i].details);
  }
  CHECK(rejections_to_jsonl(records).substr(0, 47) == R"({"id":"a","stage":"empty_prediction","details":)");
}
