#include "laca/corpus.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <fstream>
#include <algorithm>
#include <istream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "laca/errors.hpp"
#include "laca/hash.hpp"
#include "laca/text.hpp"

namespace laca {

namespace pt = boost::property_tree;

namespace {

std::optional<std::size_t> parse_offset(const boost::optional<std::string>& raw) {
  if (!raw) return std::nullopt;
  std::size_t value = 0;
  const auto* first = raw->data();
  const auto* last = raw->data() + raw->size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

void collect_sentences(const pt::ptree& node, const LanguageCode& lang, XmlParseResult& result) {
  for (const auto& [name, child] : node) {
    if (name != "sentence") {
      if (name != "<xmlattr>" && name != "<xmlcomment>") collect_sentences(child, lang, result);
      continue;
    }
    LabeledExample ex;
    ex.id = child.get<std::string>("<xmlattr>.id", "");
    ex.lang = lang;
    ex.text = child.get<std::string>("text", "");
    ex.origin = Origin::Gold;
    if (ex.id.empty()) {
      ex.id = "s" + std::to_string(result.dataset.size() + result.skipped_sentences);
    }
    const auto text_length = text::length(ex.text);

    bool offsets_ok = true;
    if (auto opinions = child.get_child_optional("Opinions")) {
      for (const auto& [oname, opinion] : *opinions) {
        if (oname != "Opinion") continue;
        const auto target = opinion.get<std::string>("<xmlattr>.target", "NULL");
        if (target == "NULL") {
          ++result.null_targets;
          continue;
        }
        SentimentTuple tuple;
        tuple.aspect = text::trim(target);
        const auto polarity = parse_polarity(
            text::casefold(opinion.get<std::string>("<xmlattr>.polarity", "")));
        if (!polarity || tuple.aspect.empty()) {
          spdlog::warn("sentence {}: opinion with target '{}' has unusable polarity or target",
                       ex.id, target);
          continue;
        }
        tuple.polarity = *polarity;
        if (auto category = opinion.get_optional<std::string>("<xmlattr>.category")) {
          tuple.category = *category;
        }
        const auto from = parse_offset(opinion.get_optional<std::string>("<xmlattr>.from"));
        const auto to = parse_offset(opinion.get_optional<std::string>("<xmlattr>.to"));
        if (from && to) {
          CharSpan span{*from, *to};
          if (span.to > text_length || !span_matches(ex.text, span, tuple.aspect)) {
            result.offset_issues.push_back({ex.id, target, span});
            offsets_ok = false;
            continue;
          }
          tuple.span = span;
        }
        ex.tuples.insert(std::move(tuple));
      }
    }
    if (!offsets_ok) {
      ++result.skipped_sentences;
      continue;
    }
    if (text::trim(ex.text).empty()) {
      spdlog::warn("sentence {}: empty text, skipped", ex.id);
      ++result.skipped_sentences;
      continue;
    }
    result.dataset.push_back(std::move(ex));
  }
}

}  // namespace

XmlParseResult parse_semeval_xml(std::istream& in, const LanguageCode& lang) {
  // pt::read_xml does not check that closing tags match, so drive rapidxml
  // directly with validation on and build the tree the same way.
  namespace rx = pt::detail::rapidxml;
  std::vector<char> buf(std::istreambuf_iterator<char>(in), {});
  buf.push_back('\0');
  rx::xml_document<char> doc;
  try {
    doc.parse<rx::parse_validate_closing_tags | rx::parse_comment_nodes>(buf.data());
  } catch (const rx::parse_error& e) {
    const auto line = std::count(buf.data(), e.where<char>(), '\n') + 1;
    throw MalformedXml("malformed XML at line " + std::to_string(line) + ": " + e.what(),
                       static_cast<std::size_t>(line));
  }
  pt::ptree tree;
  for (auto* child = doc.first_node(); child; child = child->next_sibling()) {
    pt::xml_parser::read_xml_node(child, tree, 0);
  }
  XmlParseResult result;
  collect_sentences(tree, lang, result);
  check_unique_ids(result.dataset);
  // Text content must be valid UTF-8 for offsets to mean anything.
  for (const auto& ex : result.dataset) (void)text::to_utf32(ex.text);
  return result;
}

XmlParseResult parse_semeval_xml_file(const std::filesystem::path& path, const LanguageCode& lang) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return parse_semeval_xml(in, lang);
}

nlohmann::ordered_json tuple_to_json(const SentimentTuple& t) {
  nlohmann::ordered_json j;
  j["aspect"] = t.aspect;
  j["polarity"] = std::string(to_string(t.polarity));
  if (t.span) {
    j["from"] = t.span->from;
    j["to"] = t.span->to;
  }
  if (t.category) j["category"] = *t.category;
  return j;
}

SentimentTuple tuple_from_json(const nlohmann::json& j, const std::string* text) {
  if (!j.is_object()) throw std::invalid_argument("tuple must be an object");
  if (!j.contains("aspect") || !j["aspect"].is_string()) {
    throw std::invalid_argument("tuple field 'aspect' missing or not a string");
  }
  if (!j.contains("polarity") || !j["polarity"].is_string()) {
    throw std::invalid_argument("tuple field 'polarity' missing or not a string");
  }
  SentimentTuple t;
  t.aspect = j["aspect"].get<std::string>();
  if (t.aspect.empty() || text::trim(t.aspect) != t.aspect) {
    throw std::invalid_argument("aspect '" + t.aspect + "' is empty or has surrounding whitespace");
  }
  const auto polarity = parse_polarity(j["polarity"].get<std::string>());
  if (!polarity) {
    throw std::invalid_argument("unknown polarity '" + j["polarity"].get<std::string>() + "'");
  }
  t.polarity = *polarity;
  const bool has_from = j.contains("from") && !j["from"].is_null();
  const bool has_to = j.contains("to") && !j["to"].is_null();
  if (has_from != has_to) throw std::invalid_argument("'from' and 'to' must appear together");
  if (has_from) {
    if (!j["from"].is_number_unsigned() || !j["to"].is_number_unsigned()) {
      throw std::invalid_argument("'from'/'to' must be non-negative integers");
    }
    CharSpan span{j["from"].get<std::size_t>(), j["to"].get<std::size_t>()};
    if (text && !span_matches(*text, span, t.aspect)) {
      throw std::invalid_argument("span [" + std::to_string(span.from) + "," +
                                  std::to_string(span.to) + ") does not cover aspect '" +
                                  t.aspect + "'");
    }
    t.span = span;
  }
  if (j.contains("category") && !j["category"].is_null()) {
    if (!j["category"].is_string()) throw std::invalid_argument("'category' must be a string");
    t.category = j["category"].get<std::string>();
  }
  return t;
}

nlohmann::ordered_json example_to_json(const LabeledExample& ex) {
  nlohmann::ordered_json j;
  j["id"] = ex.id;
  j["lang"] = ex.lang.str();
  j["text"] = ex.text;
  j["tuples"] = nlohmann::ordered_json::array();
  for (const auto& t : ex.tuples) j["tuples"].push_back(tuple_to_json(t));
  j["origin"] = std::string(to_string(ex.origin));
  return j;
}

LabeledExample example_from_json(const nlohmann::json& j, const JsonlOptions& options) {
  if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
  for (const char* key : {"id", "lang", "text", "origin"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing field '") + key + "'");
    if (!j[key].is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  }
  if (!j.contains("tuples")) throw std::invalid_argument("missing field 'tuples'");
  if (!j["tuples"].is_array()) throw std::invalid_argument("field 'tuples' must be an array");

  LabeledExample ex;
  ex.id = j["id"].get<std::string>();
  try {
    ex.lang = LanguageCode::parse(j["lang"].get<std::string>(), options.allow_any_lang);
  } catch (const DataError& e) {
    throw std::invalid_argument(e.what());
  }
  ex.text = j["text"].get<std::string>();
  if (ex.text.empty()) throw std::invalid_argument("field 'text' must be non-empty");
  const auto origin = parse_origin(j["origin"].get<std::string>());
  if (!origin) throw std::invalid_argument("unknown origin '" + j["origin"].get<std::string>() + "'");
  ex.origin = *origin;
  for (const auto& tj : j["tuples"]) ex.tuples.insert(tuple_from_json(tj, &ex.text));
  return ex;
}

LabeledDataset read_jsonl(std::istream& in, const JsonlOptions& options) {
  LabeledDataset dataset;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      dataset.push_back(example_from_json(nlohmann::json::parse(line), options));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaViolation(e.what(), line_no);
    } catch (const std::invalid_argument& e) {
      throw SchemaViolation(e.what(), line_no);
    } catch (const InvalidUtf8& e) {
      throw SchemaViolation(e.what(), line_no);
    }
  }
  check_unique_ids(dataset);
  return dataset;
}

LabeledDataset read_jsonl(const std::filesystem::path& path, const JsonlOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return read_jsonl(in, options);
}

std::string to_jsonl(const LabeledDataset& dataset) {
  std::string out;
  for (const auto& ex : dataset) {
    out += example_to_json(ex).dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const LabeledDataset& dataset, std::ostream& out) { out << to_jsonl(dataset); }

void write_jsonl(const LabeledDataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, to_jsonl(dataset));
}

DatasetStats dataset_stats(const LabeledDataset& dataset) {
  DatasetStats stats;
  stats.n_sentences = dataset.size();
  for (const auto& ex : dataset) {
    for (const auto& t : ex.tuples) {
      ++stats.polarity_histogram[static_cast<std::size_t>(t.polarity)];
      ++stats.n_aspects;
    }
  }
  return stats;
}

nlohmann::ordered_json stats_to_json(const DatasetStats& stats) {
  nlohmann::ordered_json j;
  j["n_sentences"] = stats.n_sentences;
  j["n_aspects"] = stats.n_aspects;
  for (auto p : kPolarities) j["polarity_histogram"][std::string(to_string(p))] = stats.count(p);
  return j;
}

}  // namespace laca
