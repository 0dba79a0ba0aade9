#include "laca/mock.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include <spdlog/spdlog.h>

#include "laca/corpus.hpp"
#include "laca/errors.hpp"
#include "laca/genformat.hpp"
#include "laca/hash.hpp"
#include "laca/random.hpp"
#include "laca/tagging.hpp"
#include "laca/text.hpp"

namespace laca::mock {

namespace {

struct LanguageTemplate {
  std::string_view code;
  std::string_view article;  // prefix before the aspect, lowercase
  std::string_view copula;   // between aspect and adjective; may be empty
  std::array<std::string_view, 3> adjectives;  // indexed by Polarity
  std::string_view conjunction;
  std::string_view filler;  // neutral noun used when an aspect is dropped
};

constexpr std::array<LanguageTemplate, 6> kTemplates = {{
    {"en", "the ", " was", {"excellent", "terrible", "okay"}, "and", "place"},
    {"es", "el ", " fue", {"excelente", "terrible", "normal"}, "y", "lugar"},
    {"fr", "le ", " était", {"excellent", "horrible", "correct"}, "et", "endroit"},
    {"nl", "de ", " was", {"uitstekend", "verschrikkelijk", "gewoon"}, "en", "zaak"},
    {"ru", "", " был", {"отличным", "ужасным", "обычным"}, "и", "место"},
    {"tr", "", "", {"harikaydı", "berbattı", "sıradandı"}, "ve", "mekan"},
}};

const LanguageTemplate& template_for(std::string_view code) {
  for (const auto& t : kTemplates) {
    if (t.code == code) return t;
  }
  return kTemplates[0];
}

std::optional<Polarity> cue_polarity(std::string_view folded_token) {
  for (const auto& t : kTemplates) {
    for (std::size_t p = 0; p < 3; ++p) {
      if (t.adjectives[p] == folded_token) return static_cast<Polarity>(p);
    }
  }
  return std::nullopt;
}

std::string clause(const LanguageTemplate& tmpl, std::string_view aspect, Polarity p) {
  std::string out(tmpl.article);
  out += aspect;
  out += tmpl.copula;
  out += ' ';
  out += tmpl.adjectives[static_cast<std::size_t>(p)];
  return out;
}

std::string join_clauses(const LanguageTemplate& tmpl, const std::vector<std::string>& clauses) {
  std::string out;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i > 0) {
      out += i + 1 == clauses.size() ? " " + std::string(tmpl.conjunction) + " " : ", ";
    }
    out += clauses[i];
  }
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 32);
  out += '.';
  return out;
}

std::size_t term_length(const std::string& key) {
  return static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ')) + 1;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double draw(std::uint64_t base, std::uint64_t stream) {
  return static_cast<double>(mix_seed(base, stream) >> 11) * 0x1.0p-53;
}

TransportResponse json_response(const nlohmann::ordered_json& j) { return {200, j.dump(), ""}; }

TransportResponse bad_request(const std::string& what) {
  return {400, nlohmann::json{{"error", what}}.dump(), ""};
}

}  // namespace

std::string normalize_term(std::string_view term) {
  std::string out;
  for (const auto& tok : tokenize(text::casefold(term))) {
    if (!out.empty()) out += ' ';
    out += tok.text;
  }
  return out;
}

Lexicon make_lexicon(const std::map<std::string, Polarity>& raw) {
  Lexicon out;
  for (const auto& [term, p] : raw) {
    auto key = normalize_term(term);
    if (!key.empty()) out.insert_or_assign(std::move(key), p);
  }
  return out;
}

Lexicon lexicon_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigInvalid("mock lexicon must be an object of term -> polarity");
  std::map<std::string, Polarity> raw;
  for (const auto& [term, value] : j.items()) {
    const auto p = value.is_string() ? parse_polarity(value.get<std::string>()) : std::nullopt;
    if (!p) throw ConfigInvalid("mock lexicon entry '" + term + "' has no valid polarity");
    raw[term] = *p;
  }
  return make_lexicon(raw);
}

nlohmann::ordered_json lexicon_to_json(const Lexicon& lexicon) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [term, p] : lexicon) j[term] = std::string(to_string(p));
  return j;
}

Lexicon learn_lexicon(const LabeledDataset& dataset) {
  std::map<std::string, std::array<std::size_t, 3>> counts;
  for (const auto& ex : dataset) {
    for (const auto& t : ex.tuples) {
      auto key = normalize_term(t.aspect);
      if (!key.empty()) ++counts[key][static_cast<std::size_t>(t.polarity)];
    }
  }
  Lexicon out;
  for (const auto& [term, c] : counts) {
    const auto best = std::max_element(c.begin(), c.end()) - c.begin();
    out[term] = static_cast<Polarity>(best);
  }
  return out;
}

TupleSet mock_absa_predict(const Lexicon& lexicon, std::string_view text, bool use_cues) {
  TupleSet out;
  if (lexicon.empty()) return out;
  std::size_t max_len = 1;
  for (const auto& [term, _] : lexicon) max_len = std::max(max_len, term_length(term));

  const auto tokens = tokenize(text);
  std::vector<std::string> folded;
  folded.reserve(tokens.size());
  for (const auto& t : tokens) folded.push_back(text::casefold(t.text));
  const auto wide = text::to_utf32(text);

  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    for (std::size_t len = std::min(max_len, tokens.size() - i); len >= 1; --len) {
      std::string key = folded[i];
      for (std::size_t k = 1; k < len; ++k) key += ' ' + folded[i + k];
      auto hit = lexicon.find(key);
      if (hit == lexicon.end()) continue;

      SentimentTuple tuple;
      tuple.span = CharSpan{tokens[i].from, tokens[i + len - 1].to};
      tuple.aspect = text::to_utf8(std::u32string_view(wide).substr(tuple.span->from, tuple.span->length()));
      tuple.polarity = hit->second;
      if (use_cues) {
        for (std::size_t c = i + len; c < std::min(tokens.size(), i + len + 3); ++c) {
          if (auto cue = cue_polarity(folded[c])) {
            tuple.polarity = *cue;
            break;
          }
        }
      }
      out.insert(std::move(tuple));
      i += len;
      matched = true;
      break;
    }
    if (!matched) ++i;
  }
  return out;
}

std::string mock_llm_generate(const TupleSet& label, const LanguageCode& lang) {
  if (label.empty()) throw EmptyTupleList();
  const auto& tmpl = template_for(lang.str());
  std::vector<std::string> clauses;
  for (const auto& t : label) clauses.push_back(clause(tmpl, t.aspect, t.polarity));
  return join_clauses(tmpl, clauses);
}

MockService::MockService(MockServiceOptions options) : options_(std::move(options)) {
  if (!options_.model_dir.empty()) std::filesystem::create_directories(options_.model_dir);
}

std::shared_ptr<Transport> MockService::transport() {
  auto self = shared_from_this();
  return std::make_shared<HandlerTransport>(
      [self](const std::string& path, const std::string& body) { return self->handle(path, body); });
}

std::size_t MockService::calls(std::string_view path) const {
  std::lock_guard lock(mutex_);
  auto it = calls_.find(path);
  return it == calls_.end() ? 0 : it->second;
}

TransportResponse MockService::handle(const std::string& path, const std::string& body) {
  {
    std::lock_guard lock(mutex_);
    ++calls_[path];
  }
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return bad_request(std::string("request body is not JSON: ") + e.what());
  }
  try {
    if (path == kPredictPath) return predict(request);
    if (path == kGeneratePath) return generate(request);
    if (path == kTrainPath) return train(request);
  } catch (const ProtocolViolation& e) {
    return bad_request(e.what());
  } catch (const DataError& e) {
    return bad_request(e.what());
  }
  return {404, nlohmann::json{{"error", "no route " + path}}.dump(), ""};
}

Lexicon MockService::model_lexicon(const std::string& model) {
  std::lock_guard lock(mutex_);
  if (auto it = models_.find(model); it != models_.end()) return it->second;
  if (!options_.model_dir.empty()) {
    const auto file = options_.model_dir / (model + ".json");
    if (std::filesystem::exists(file)) {
      auto lexicon = lexicon_from_json(nlohmann::json::parse(read_file(file)));
      models_.emplace(model, lexicon);
      return lexicon;
    }
  }
  return {};
}

TransportResponse MockService::predict(const nlohmann::json& body) {
  const auto request = wire::decode_predict_request(body);
  Lexicon lexicon = options_.base_lexicon;
  for (auto& [term, p] : model_lexicon(request.model)) lexicon.insert_or_assign(term, p);
  PredictResponse response;
  for (const auto& s : request.sentences) {
    response.predictions.push_back({s.id, mock_absa_predict(lexicon, s.text, options_.use_cues)});
  }
  return json_response(wire::encode(response));
}

TransportResponse MockService::generate(const nlohmann::json& body) {
  const auto request = wire::decode_generate_request(body);
  const std::uint64_t base = mix_seed(request.seed.value_or(0), fnv1a(request.prompt));
  if (draw(base, 1) < options_.generate_fail_rate) {
    return {503, nlohmann::json{{"error", "injected failure"}}.dump(), ""};
  }

  // Target language is named on the instruction's first line.
  const auto first_line = request.prompt.substr(0, request.prompt.find('\n'));
  auto lang = LanguageCode::parse("en");
  for (auto code : {"es", "fr", "nl", "ru", "tr", "en"}) {
    const auto candidate = LanguageCode::parse(code);
    if (first_line.find(" in " + std::string(candidate.english_name())) != std::string::npos) {
      lang = candidate;
      break;
    }
  }
  // The label is the last "Input:" line.
  const auto input_pos = request.prompt.rfind("Input:");
  if (input_pos == std::string::npos) return json_response(wire::encode(GenerateResponse{""}));
  const auto line_end = request.prompt.find('\n', input_pos);
  const auto label = parse_tuples(request.prompt.substr(input_pos + 6, line_end - input_pos - 6)).tuples;
  if (label.empty()) return json_response(wire::encode(GenerateResponse{""}));

  const auto& tmpl = template_for(lang.str());
  std::vector<std::string> clauses;
  for (const auto& t : label) clauses.push_back(clause(tmpl, t.aspect, t.polarity));
  if (draw(base, 2) < options_.drop_aspect_rate) {
    clauses.front() = clause(tmpl, tmpl.filler, label[0].polarity);
  }
  if (draw(base, 3) < options_.extra_term_rate) {
    std::vector<std::pair<std::string, Polarity>> extras;
    for (const auto& [term, p] : options_.base_lexicon) {
      if (!std::any_of(label.begin(), label.end(),
                       [&](const SentimentTuple& t) { return normalize_term(t.aspect) == term; })) {
        extras.emplace_back(term, p);
      }
    }
    if (!extras.empty()) {
      const auto& [term, p] = extras[mix_seed(base, 4) % extras.size()];
      clauses.push_back(clause(tmpl, term, p));
    }
  }
  return json_response(wire::encode(GenerateResponse{join_clauses(tmpl, clauses)}));
}

TransportResponse MockService::train(const nlohmann::json& body) {
  const auto request = wire::decode_train_request(body);
  std::string uri = request.dataset_uri;
  if (uri.rfind("file://", 0) == 0) uri = uri.substr(7);
  const auto bytes = read_file(uri);
  std::istringstream in(bytes);
  const auto dataset = read_jsonl(in, JsonlOptions{true});

  std::string init_from;
  Lexicon lexicon;
  if (request.hyperparams.contains("init_from") && request.hyperparams["init_from"].is_string()) {
    init_from = request.hyperparams["init_from"].get<std::string>();
    lexicon = model_lexicon(init_from);
  }
  for (auto& [term, p] : learn_lexicon(dataset)) lexicon.insert_or_assign(term, p);

  const auto id = "mock-" + sha256_hex(request.backbone + '\n' + std::to_string(request.seed) +
                                       '\n' + sha256_hex(bytes) + '\n' + init_from)
                                .substr(0, 16);
  {
    std::lock_guard lock(mutex_);
    models_.insert_or_assign(id, lexicon);
  }
  if (!options_.model_dir.empty()) {
    write_file_atomic(options_.model_dir / (id + ".json"), lexicon_to_json(lexicon).dump(1));
  }
  spdlog::debug("mock trained {} on {} examples ({} terms)", id, dataset.size(), lexicon.size());
  return json_response(wire::encode(TrainResponse{id}));
}

std::map<std::string, TupleSet> LexiconPredictor::predict(const LanguageCode&,
                                                          std::span<const LabeledExample> examples) {
  ++calls_;
  sentences_ += examples.size();
  std::map<std::string, TupleSet> out;
  for (const auto& ex : examples) out[ex.id] = mock_absa_predict(lexicon_, ex.text, use_cues_);
  return out;
}

}  // namespace laca::mock
