#include <algorithm>

#include <doctest.h>

#include "laca/errors.hpp"
#include "laca/types.hpp"
#include "../support/synth.hpp"

using namespace laca;

TEST_CASE("polarity words are exact lowercase") {
  for (auto p : kPolarities) CHECK(parse_polarity(to_string(p)) == p);
  CHECK_FALSE(parse_polarity("Positive"));
  CHECK_FALSE(parse_polarity("pos"));
  CHECK_FALSE(parse_polarity(""));
}

TEST_CASE("language codes") {
  CHECK(LanguageCode::parse("es").english_name() == "Spanish");
  CHECK(LanguageCode::parse("tr").english_name() == "Turkish");
  CHECK_THROWS_AS(LanguageCode::parse("de"), DataError);
  CHECK(LanguageCode::parse("de", true).str() == "de");
  CHECK_THROWS_AS(LanguageCode::parse("EN", true), DataError);
  CHECK_THROWS_AS(LanguageCode::parse("eng", true), DataError);
}

TEST_CASE("tuple set deduplicates on normalized aspect and polarity") {
  TupleSet s;
  CHECK(s.insert({"Tea", Polarity::Positive, std::nullopt, std::nullopt}));
  CHECK_FALSE(s.insert({"tea", Polarity::Positive, std::nullopt, std::nullopt}));
  CHECK(s.size() == 1);
  CHECK(s.insert({"tea", Polarity::Negative, std::nullopt, std::nullopt}));
  CHECK(s.size() == 2);
  CHECK(s.contains({"tea", Polarity::Positive}));
  CHECK_FALSE(s.contains({"coffee", Polarity::Positive}));
}

TEST_CASE("tuple set keeps spanned tuples first in span order") {
  TupleSet s;
  s.insert({"zeta", Polarity::Positive, std::nullopt, std::nullopt});
  s.insert({"service", Polarity::Negative, CharSpan{23, 30}, std::nullopt});
  s.insert({"tea", Polarity::Positive, CharSpan{6, 9}, std::nullopt});
  s.insert({"alpha", Polarity::Neutral, std::nullopt, std::nullopt});
  REQUIRE(s.size() == 4);
  CHECK(s[0].aspect == "tea");
  CHECK(s[1].aspect == "service");
  CHECK(s[2].aspect == "alpha");
  CHECK(s[3].aspect == "zeta");
}

TEST_CASE("a spanned duplicate replaces a span-less one") {
  TupleSet s;
  s.insert({"tea", Polarity::Positive, std::nullopt, std::nullopt});
  CHECK_FALSE(s.insert({"tea", Polarity::Positive, CharSpan{6, 9}, std::nullopt}));
  REQUIRE(s.size() == 1);
  CHECK(s[0].span == CharSpan{6, 9});
}

TEST_CASE("tuple set canonical form does not depend on insertion order") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto list = testing::random_tuple_list(rng);
    TupleSet forward(list);
    std::reverse(list.begin(), list.end());
    TupleSet backward(list);
    CHECK(forward.keys() == backward.keys());
  }
}

TEST_CASE("same_keys ignores spans and categories") {
  TupleSet a{{"tea", Polarity::Positive, CharSpan{6, 9}, std::string("DRINKS#QUALITY")}};
  TupleSet b{{"TEA", Polarity::Positive, std::nullopt, std::nullopt}};
  CHECK(same_keys(a, b));
  TupleSet c{{"tea", Polarity::Negative, std::nullopt, std::nullopt}};
  CHECK_FALSE(same_keys(a, c));
}

TEST_CASE("span_matches checks range and covered text") {
  CHECK(span_matches("Great tea but terrible service", {6, 9}, "tea"));
  CHECK_FALSE(span_matches("Great tea but terrible service", {6, 10}, "tea"));
  CHECK_FALSE(span_matches("tea", {0, 4}, "tea"));
  CHECK_FALSE(span_matches("tea", {2, 2}, ""));
  CHECK(span_matches("El té fue bueno", {3, 5}, "té"));
}

TEST_CASE("duplicate ids are reported") {
  LabeledDataset ds(2);
  ds[0].id = "a";
  ds[1].id = "a";
  CHECK_THROWS_AS(check_unique_ids(ds), DuplicateId);
  ds[1].id = "b";
  CHECK_NOTHROW(check_unique_ids(ds));
}

TEST_CASE("origin words") {
  CHECK(parse_origin("gold") == Origin::Gold);
  CHECK(parse_origin("predicted") == Origin::Predicted);
  CHECK(parse_origin("generated") == Origin::Generated);
  CHECK_FALSE(parse_origin("silver"));
}

TEST_CASE("exit codes") {
  CHECK(exit_code(ErrorKind::Config) == 2);
  CHECK(exit_code(ErrorKind::Backend) == 3);
  CHECK(exit_code(ErrorKind::Data) == 4);
}
