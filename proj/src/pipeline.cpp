#include "laca/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <spdlog/spdlog.h>

#include "laca/corpus.hpp"
#include "laca/errors.hpp"
#include "laca/eval.hpp"
#include "laca/filter.hpp"
#include "laca/hash.hpp"
#include "laca/mock.hpp"
#include "laca/text.hpp"

namespace laca {

namespace fs = std::filesystem;

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::Laca: return "laca";
    case RunMode::SelfTraining: return "self_training";
    case RunMode::ZeroShot: return "zero_shot";
  }
  return "laca";
}

std::optional<RunMode> parse_run_mode(std::string_view word) {
  for (auto m : {RunMode::Laca, RunMode::SelfTraining, RunMode::ZeroShot}) {
    if (to_string(m) == word) return m;
  }
  return std::nullopt;
}

BackendConfig BackendSettings::absa_config() const {
  BackendConfig c;
  c.base_url = absa_url;
  c.timeout_s = timeout_s;
  c.max_retries = max_retries;
  c.max_in_flight = max_in_flight;
  c.auth_token = auth_token;
  c.backoff_base_s = backoff_base_s;
  c.batch_size = batch_size;
  return c;
}

BackendConfig BackendSettings::llm_config() const {
  auto c = absa_config();
  c.base_url = llm_url;
  return c;
}

void RunConfig::validate() const {
  if (source_lang == target_lang) throw ConfigInvalid("source_lang and target_lang must differ");
  if (seeds.empty()) throw ConfigInvalid("seeds must not be empty");
  if (std::set(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigInvalid("seeds must be distinct");
  }
  if (k_shot == 0) throw ConfigInvalid("k_shot must be >= 1");
  if (source_train.empty() || source_dev.empty() || target_unlabelled.empty()) {
    throw ConfigInvalid("source_train, source_dev and target_unlabelled are required");
  }
  if (work_dir.empty()) throw ConfigInvalid("work_dir is required");
  rebalance.validate();
  sampling.validate();
  if (backend.kind != "mock" && backend.kind != "http") {
    throw ConfigInvalid("backend.kind must be \"mock\" or \"http\"");
  }
  if (backend.kind == "http" && (backend.absa_url.empty() || backend.llm_url.empty())) {
    throw ConfigInvalid("backend.absa_url and backend.llm_url are required for http backends");
  }
  backend.absa_config().validate();
  for (double r : {backend.mock.drop_aspect_rate, backend.mock.extra_term_rate,
                   backend.mock.generate_fail_rate}) {
    if (r < 0.0 || r > 1.0) throw ConfigInvalid("mock fault rates must lie in [0, 1]");
  }
}

namespace {

using Json = nlohmann::json;

void check_keys(const Json& j, std::string_view where, std::initializer_list<std::string_view> known) {
  if (!j.is_object()) throw ConfigInvalid(std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigInvalid("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

bool has(const Json& j, const char* key) { return j.contains(key) && !j[key].is_null(); }

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

RunConfig parse_run_config(const Json& j, const fs::path& base_dir) {
  if (j.contains("target_dev")) {
    throw ConfigInvalid("target_dev is not accepted: model selection uses the source dev split only");
  }
  check_keys(j, "config",
             {"source_lang", "target_lang", "source_train", "source_dev", "target_unlabelled",
              "target_test", "work_dir", "absa_backbone", "absa_model", "hyperparams", "k_shot",
              "rebalance", "sampling", "seed", "seeds", "mode", "max_generated",
              "prompt_template", "backend"});
  RunConfig c;
  try {
    c.source_lang = LanguageCode::parse(j.at("source_lang").get<std::string>());
    c.target_lang = LanguageCode::parse(j.at("target_lang").get<std::string>());
    c.source_train = resolve(base_dir, j.at("source_train").get<std::string>());
    c.source_dev = resolve(base_dir, j.at("source_dev").get<std::string>());
    c.target_unlabelled = resolve(base_dir, j.at("target_unlabelled").get<std::string>());
    if (has(j, "target_test")) c.target_test = resolve(base_dir, j["target_test"].get<std::string>());
    c.work_dir = resolve(base_dir, j.value("work_dir", std::string("work")));
    read_opt(j, "absa_backbone", c.absa_backbone);
    read_opt(j, "absa_model", c.absa_model);
    if (j.contains("hyperparams")) {
      c.hyperparams = j["hyperparams"];
      if (!c.hyperparams.is_object()) throw ConfigInvalid("hyperparams must be an object");
    }
    read_opt(j, "k_shot", c.k_shot);
    if (j.contains("rebalance")) {
      const auto& r = j["rebalance"];
      check_keys(r, "rebalance", {"select_ratio", "neutral_prob", "negative_prob"});
      read_opt(r, "select_ratio", c.rebalance.select_ratio);
      read_opt(r, "neutral_prob", c.rebalance.neutral_prob);
      read_opt(r, "negative_prob", c.rebalance.negative_prob);
    }
    if (j.contains("sampling")) {
      const auto& s = j["sampling"];
      check_keys(s, "sampling", {"top_p", "temperature", "max_tokens"});
      read_opt(s, "top_p", c.sampling.top_p);
      read_opt(s, "temperature", c.sampling.temperature);
      read_opt(s, "max_tokens", c.sampling.max_tokens);
    }
    read_opt(j, "seed", c.seed);
    if (j.contains("seeds")) {
      c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    } else {
      c.seeds = {c.seed};
    }
    if (j.contains("mode")) {
      const auto word = j["mode"].get<std::string>();
      auto mode = parse_run_mode(word);
      if (!mode) throw ConfigInvalid("unknown mode '" + word + "'");
      c.mode = *mode;
    }
    if (has(j, "max_generated")) c.max_generated = j["max_generated"].get<std::size_t>();
    if (has(j, "prompt_template")) {
      c.prompt_template = resolve(base_dir, j["prompt_template"].get<std::string>());
    }
    if (j.contains("backend")) {
      const auto& b = j["backend"];
      check_keys(b, "backend",
                 {"kind", "absa_url", "llm_url", "timeout_s", "max_retries", "max_in_flight",
                  "auth_token", "backoff_base_s", "batch_size", "mock"});
      read_opt(b, "kind", c.backend.kind);
      read_opt(b, "absa_url", c.backend.absa_url);
      read_opt(b, "llm_url", c.backend.llm_url);
      read_opt(b, "timeout_s", c.backend.timeout_s);
      read_opt(b, "max_retries", c.backend.max_retries);
      read_opt(b, "max_in_flight", c.backend.max_in_flight);
      if (has(b, "auth_token")) c.backend.auth_token = b["auth_token"].get<std::string>();
      read_opt(b, "backoff_base_s", c.backend.backoff_base_s);
      read_opt(b, "batch_size", c.backend.batch_size);
      if (b.contains("mock")) {
        const auto& m = b["mock"];
        check_keys(m, "backend.mock",
                   {"lexicon", "drop_aspect_rate", "extra_term_rate", "generate_fail_rate"});
        if (has(m, "lexicon")) c.backend.mock.lexicon = resolve(base_dir, m["lexicon"].get<std::string>());
        read_opt(m, "drop_aspect_rate", c.backend.mock.drop_aspect_rate);
        read_opt(m, "extra_term_rate", c.backend.mock.extra_term_rate);
        read_opt(m, "generate_fail_rate", c.backend.mock.generate_fail_rate);
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigInvalid(std::string("bad config value: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigInvalid(e.what());
  }
  c.hash = sha256_hex(j.dump());
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigInvalid("config '" + path.string() + "' is not valid JSON: " + e.what());
  } catch (const DataError& e) {
    throw ConfigInvalid(e.what());
  }
  auto c = parse_run_config(j, fs::absolute(path).parent_path());
  c.path = fs::absolute(path);
  return c;
}

const StageRecord* RunManifest::latest(std::string_view name) const {
  for (auto it = stages.rbegin(); it != stages.rend(); ++it) {
    if (it->name == name) return &*it;
  }
  return nullptr;
}

std::vector<const StageRecord*> RunManifest::effective() const {
  std::vector<const StageRecord*> out;
  std::set<std::string> seen;
  for (const auto& s : stages) {
    if (seen.insert(s.name).second) out.push_back(latest(s.name));
  }
  return out;
}

nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["config_hash"] = m.config_hash;
  j["config_path"] = m.config_path.string();
  j["mode"] = std::string(to_string(m.mode));
  auto stages = nlohmann::ordered_json::array();
  for (const auto& s : m.stages) {
    nlohmann::ordered_json r;
    r["name"] = s.name;
    r["inputs"] = s.inputs;
    auto outputs = nlohmann::ordered_json::array();
    for (const auto& o : s.outputs) outputs.push_back({{"path", o.path}, {"sha256", o.sha256}});
    r["outputs"] = std::move(outputs);
    r["wall_time_s"] = s.wall_time_s;
    r["counts"] = s.counts;
    stages.push_back(std::move(r));
  }
  j["stages"] = std::move(stages);
  return j;
}

RunManifest manifest_from_json(const Json& j) {
  try {
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config_path = j.value("config_path", std::string());
    auto mode = parse_run_mode(j.at("mode").get<std::string>());
    if (!mode) throw DataError("manifest has an unknown mode");
    m.mode = *mode;
    for (const auto& r : j.at("stages")) {
      StageRecord s;
      s.name = r.at("name").get<std::string>();
      s.inputs = r.at("inputs").get<std::map<std::string, std::string>>();
      for (const auto& o : r.at("outputs")) {
        s.outputs.push_back({o.at("path").get<std::string>(), o.at("sha256").get<std::string>()});
      }
      s.wall_time_s = r.value("wall_time_s", 0.0);
      s.counts = nlohmann::ordered_json(r.value("counts", Json::object()));
      m.stages.push_back(std::move(s));
    }
    return m;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

RunManifest load_manifest(const fs::path& path) {
  try {
    return manifest_from_json(Json::parse(read_file(path)));
  } catch (const Json::parse_error& e) {
    throw DataError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void save_manifest(const RunManifest& m, const fs::path& path) {
  write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

const std::vector<std::string>& stage_order() {
  static const std::vector<std::string> order = {"train1",     "predict", "prefilter",
                                                 "rebalance",  "generate", "postfilter",
                                                 "merge",      "train2",  "evaluate"};
  return order;
}

std::vector<std::string> stages_for(RunMode mode) {
  switch (mode) {
    case RunMode::ZeroShot: return {"train1", "evaluate"};
    case RunMode::SelfTraining: return {"train1", "predict", "merge", "train2", "evaluate"};
    case RunMode::Laca: return stage_order();
  }
  return stage_order();
}

LabeledDataset cap_generated(const LabeledDataset& dataset, std::size_t n, Rng& rng) {
  if (n >= dataset.size()) return dataset;
  auto picks = rng.sample_indices(dataset.size(), n);
  std::sort(picks.begin(), picks.end());
  LabeledDataset out;
  out.reserve(n);
  for (auto i : picks) out.push_back(dataset[i]);
  return out;
}

LabeledDataset merge_datasets(const LabeledDataset& source, const LabeledDataset& generated,
                              std::uint64_t seed) {
  LabeledDataset out;
  out.reserve(source.size() + generated.size());
  for (auto ex : source) {
    ex.id = "src:" + ex.id;
    out.push_back(std::move(ex));
  }
  for (auto ex : generated) {
    ex.id = "tgt:" + ex.id;
    out.push_back(std::move(ex));
  }
  Rng rng(seed);
  rng.shuffle(std::span(out));
  return out;
}

Backends make_backends(const RunConfig& config, std::shared_ptr<Transport> absa_override,
                       std::shared_ptr<Transport> llm_override) {
  std::shared_ptr<Transport> absa = std::move(absa_override);
  std::shared_ptr<Transport> llm = std::move(llm_override);
  BackendClient::Sleeper sleeper;
  if (config.backend.kind == "mock") {
    mock::MockServiceOptions opts;
    if (config.backend.mock.lexicon) {
      try {
        opts.base_lexicon = mock::lexicon_from_json(Json::parse(read_file(*config.backend.mock.lexicon)));
      } catch (const Json::parse_error& e) {
        throw ConfigInvalid("mock lexicon is not valid JSON: " + std::string(e.what()));
      } catch (const DataError& e) {
        throw ConfigInvalid(e.what());
      }
    }
    opts.model_dir = config.work_dir / "mock_models";
    opts.drop_aspect_rate = config.backend.mock.drop_aspect_rate;
    opts.extra_term_rate = config.backend.mock.extra_term_rate;
    opts.generate_fail_rate = config.backend.mock.generate_fail_rate;
    auto service = std::make_shared<mock::MockService>(std::move(opts));
    if (!absa) absa = service->transport();
    if (!llm) llm = service->transport();
    // Nothing to wait for in-process.
    sleeper = [](double) {};
  } else {
    if (!absa) absa = make_http_transport(config.backend.absa_config());
    if (!llm) llm = make_http_transport(config.backend.llm_config());
  }
  Backends b;
  b.absa = std::make_unique<BackendClient>(config.backend.absa_config(), absa, sleeper);
  b.llm = std::make_unique<BackendClient>(config.backend.llm_config(), llm, sleeper);
  return b;
}

std::vector<GenerationJob> make_generation_jobs(const RunConfig& config,
                                                const LabeledDataset& labels,
                                                const LabeledDataset& source_train) {
  const auto tmpl = config.prompt_template ? PromptTemplate::load(*config.prompt_template)
                                           : PromptTemplate::builtin();
  std::vector<GenerationJob> jobs;
  jobs.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    TupleSet label;
    for (const auto& t : labels[i].tuples) label.insert({t.aspect, t.polarity, std::nullopt, std::nullopt});
    jobs.push_back(make_generation_job({labels[i].id, std::move(label), i}, config.target_lang,
                                       source_train, config.k_shot, config.seed, config.sampling,
                                       tmpl));
  }
  return jobs;
}

namespace {

// Artifact names under work_dir.
constexpr const char* kTrain1 = "train1.json";
constexpr const char* kPredicted = "predicted.jsonl";
constexpr const char* kPrefiltered = "prefiltered.jsonl";
constexpr const char* kPrefilterRejections = "prefilter_rejections.jsonl";
constexpr const char* kGenInputs = "gen_inputs.jsonl";
constexpr const char* kGeneratedRaw = "generated_raw.jsonl";
constexpr const char* kGenerationFailures = "generation_failures.jsonl";
constexpr const char* kGenerated = "generated.jsonl";
constexpr const char* kPostfilterRejections = "postfilter_rejections.jsonl";
constexpr const char* kMerged = "merged.jsonl";
constexpr const char* kTrain2 = "train2.json";
constexpr const char* kEval = "eval.json";

// RNG stream ids derived from the run seed.
constexpr std::uint64_t kRebalanceStream = 0x7265626cULL;
constexpr std::uint64_t kCapStream = 0x63617070ULL;

std::string eval_predictions_file(std::uint64_t seed) {
  return "eval_predictions_" + std::to_string(seed) + ".jsonl";
}

std::string file_uri(const fs::path& p) { return "file://" + fs::absolute(p).string(); }

LabeledDataset load_lang(const fs::path& path, const LanguageCode& lang, std::string_view what) {
  auto ds = read_jsonl(path);
  for (const auto& ex : ds) {
    if (ex.lang != lang) {
      throw DataError(std::string(what) + " example '" + ex.id + "' has lang " + ex.lang.str() +
                      ", expected " + lang.str());
    }
  }
  return ds;
}

LabeledDataset predict_all(BackendClient& client, const std::string& model, const LanguageCode& lang,
                           const LabeledDataset& inputs) {
  auto predicted = predict_batch(client, model, lang, inputs);
  LabeledDataset out;
  out.reserve(inputs.size());
  for (const auto& ex : inputs) {
    auto it = predicted.find(ex.id);
    if (it == predicted.end()) throw ProtocolViolation("no prediction for '" + ex.id + "'");
    out.push_back({ex.id, ex.lang, ex.text, std::move(it->second), Origin::Predicted});
  }
  return out;
}

Json read_json(const fs::path& p) {
  try {
    return Json::parse(read_file(p));
  } catch (const Json::parse_error& e) {
    throw DataError("'" + p.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& p, const nlohmann::ordered_json& j) {
  write_file_atomic(p, j.dump(2) + "\n");
}

std::vector<std::pair<std::uint64_t, std::string>> models_of(const Json& j) {
  std::vector<std::pair<std::uint64_t, std::string>> out;
  for (const auto& m : j.at("models")) {
    out.emplace_back(m.at("seed").get<std::uint64_t>(), m.at("model").get<std::string>());
  }
  if (out.empty()) throw DataError("training record lists no models");
  return out;
}

class Runner {
 public:
  Runner(const RunConfig& config, const RunOptions& options, RunManifest manifest)
      : config_(config),
        options_(options),
        manifest_(std::move(manifest)),
        work_(config.work_dir),
        manifest_path_(work_ / kManifestFile) {}

  RunManifest run() {
    fs::create_directories(work_);
    save_manifest(manifest_, manifest_path_);
    const auto stages = stages_for(config_.mode);
    for (const auto& name : stages) {
      run_stage(name);
      if (options_.stop_after && *options_.stop_after == name) {
        spdlog::info("stopping after {}", name);
        break;
      }
    }
    return manifest_;
  }

 private:
  using Inputs = std::vector<std::pair<std::string, fs::path>>;

  struct Plan {
    Inputs inputs;
    std::vector<std::string> outputs;
    std::function<nlohmann::ordered_json()> body;
  };

  BackendClient& absa() {
    ensure_backends();
    return *backends_.absa;
  }
  BackendClient& llm() {
    ensure_backends();
    return *backends_.llm;
  }
  void ensure_backends() {
    if (!backends_.absa) {
      backends_ = make_backends(config_, options_.absa_transport, options_.llm_transport);
    }
  }

  fs::path out(const char* name) const { return work_ / name; }

  std::string stage1_model() const { return models_of(read_json(out(kTrain1))).front().second; }

  Plan plan(const std::string& name) {
    const bool laca = config_.mode == RunMode::Laca;
    if (name == "train1") {
      return {{{"source_train", config_.source_train}, {"source_dev", config_.source_dev}},
              {kTrain1},
              [this] { return train1(); }};
    }
    if (name == "predict") {
      return {{{kTrain1, out(kTrain1)}, {"target_unlabelled", config_.target_unlabelled}},
              {kPredicted},
              [this] { return predict(); }};
    }
    if (name == "prefilter") {
      return {{{kPredicted, out(kPredicted)}},
              {kPrefiltered, kPrefilterRejections},
              [this] { return prefilter(); }};
    }
    if (name == "rebalance") {
      return {{{kPrefiltered, out(kPrefiltered)}}, {kGenInputs}, [this] { return rebalance(); }};
    }
    if (name == "generate") {
      Inputs in = {{kGenInputs, out(kGenInputs)}, {"source_train", config_.source_train}};
      if (config_.prompt_template) in.emplace_back("prompt_template", *config_.prompt_template);
      return {std::move(in), {kGeneratedRaw, kGenerationFailures}, [this] { return generate(); }};
    }
    if (name == "postfilter") {
      return {{{kGeneratedRaw, out(kGeneratedRaw)}, {kTrain1, out(kTrain1)}},
              {kGenerated, kPostfilterRejections},
              [this] { return postfilter(); }};
    }
    if (name == "merge") {
      const char* dg = laca ? kGenerated : kPredicted;
      return {{{"source_train", config_.source_train}, {dg, out(dg)}},
              {kMerged},
              [this] { return merge(); }};
    }
    if (name == "train2") {
      return {{{kMerged, out(kMerged)}, {kTrain1, out(kTrain1)}, {"source_dev", config_.source_dev}},
              {kTrain2},
              [this] { return train2(); }};
    }
    if (name == "evaluate") {
      const char* models = config_.mode == RunMode::ZeroShot ? kTrain1 : kTrain2;
      Inputs in = {{models, out(models)}};
      std::vector<std::string> outputs = {kEval};
      if (config_.target_test) {
        in.emplace_back("target_test", *config_.target_test);
        for (auto s : config_.seeds) outputs.push_back(eval_predictions_file(s));
      }
      return {std::move(in), std::move(outputs), [this] { return evaluate(); }};
    }
    throw ConfigInvalid("unknown stage '" + name + "'");
  }

  void run_stage(const std::string& name) {
    auto p = plan(name);
    std::map<std::string, std::string> inputs = {{"config", config_.hash}};
    try {
      for (const auto& [label, path] : p.inputs) inputs[label] = sha256_file(path);
    } catch (const Error& e) {
      throw StageFailure(name, e.kind(), e.what());
    }

    if (options_.resume && up_to_date(name, inputs, p.outputs)) {
      spdlog::info("stage {}: up to date, skipped", name);
      return;
    }

    if (options_.before_stage) options_.before_stage(name);
    spdlog::info("stage {}: running", name);
    const auto start = std::chrono::steady_clock::now();
    nlohmann::ordered_json counts;
    try {
      counts = p.body();
    } catch (const StageFailure&) {
      throw;
    } catch (const Error& e) {
      spdlog::error("stage {} failed: {}", name, e.what());
      throw StageFailure(name, e.kind(), e.what());
    } catch (const std::exception& e) {
      spdlog::error("stage {} failed: {}", name, e.what());
      throw StageFailure(name, ErrorKind::Data, e.what());
    }
    StageRecord record;
    record.name = name;
    record.inputs = std::move(inputs);
    for (const auto& o : p.outputs) record.outputs.push_back({o, sha256_file(work_ / o)});
    record.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    record.counts = std::move(counts);
    manifest_.stages.push_back(std::move(record));
    save_manifest(manifest_, manifest_path_);
  }

  bool up_to_date(const std::string& name, const std::map<std::string, std::string>& inputs,
                  const std::vector<std::string>& outputs) const {
    const auto* prev = manifest_.latest(name);
    if (!prev || prev->inputs != inputs || prev->outputs.size() != outputs.size()) return false;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      const auto& rec = prev->outputs[i];
      if (rec.path != outputs[i]) return false;
      const auto file = work_ / rec.path;
      if (!fs::exists(file) || sha256_file(file) != rec.sha256) return false;
    }
    return true;
  }

  Json train_hyperparams() const {
    auto hp = config_.hyperparams;
    hp["dev_uri"] = file_uri(config_.source_dev);
    return hp;
  }

  nlohmann::ordered_json train1() {
    const std::vector<std::uint64_t> seeds =
        config_.mode == RunMode::ZeroShot ? config_.seeds : std::vector<std::uint64_t>{config_.seed};
    auto models = nlohmann::ordered_json::array();
    for (auto s : seeds) {
      TrainRequest req{file_uri(config_.source_train), config_.absa_backbone, train_hyperparams(), s};
      models.push_back({{"seed", s}, {"model", absa().train(req).model}});
    }
    nlohmann::ordered_json j;
    j["backbone"] = config_.absa_backbone;
    j["models"] = models;
    write_json(out(kTrain1), j);
    return {{"models", models.size()}};
  }

  nlohmann::ordered_json predict() {
    const auto unlabelled = load_lang(config_.target_unlabelled, config_.target_lang, "target_unlabelled");
    const auto predicted = predict_all(absa(), stage1_model(), config_.target_lang, unlabelled);
    write_jsonl(predicted, out(kPredicted));
    std::size_t tuples = 0;
    for (const auto& ex : predicted) tuples += ex.tuples.size();
    return {{"sentences", predicted.size()}, {"tuples", tuples}};
  }

  nlohmann::ordered_json prefilter() {
    const auto result = prefilter_predictions(read_jsonl(out(kPredicted)));
    write_jsonl(result.kept, out(kPrefiltered));
    write_rejections(result.rejected, out(kPrefilterRejections));
    return {{"kept", result.kept.size()}, {"rejected", result.rejected.size()}};
  }

  nlohmann::ordered_json rebalance() {
    const auto prefiltered = read_jsonl(out(kPrefiltered));
    std::vector<TupleSet> labels;
    labels.reserve(prefiltered.size());
    for (const auto& ex : prefiltered) labels.push_back(ex.tuples);
    Rng rng(mix_seed(config_.seed, kRebalanceStream));
    const auto extra = laca::rebalance(labels, config_.rebalance, rng);

    LabeledDataset inputs;
    auto next = extra.begin();
    for (std::size_t i = 0; i < prefiltered.size(); ++i) {
      inputs.push_back(prefiltered[i]);
      for (; next != extra.end() && next->source_index == i; ++next) {
        auto ex = prefiltered[i];
        ex.id += "/rb";
        ex.tuples = next->label;
        inputs.push_back(std::move(ex));
      }
    }
    const auto before_cap = inputs.size();
    if (config_.max_generated) {
      Rng cap_rng(mix_seed(config_.seed, kCapStream));
      inputs = cap_generated(inputs, *config_.max_generated, cap_rng);
    }
    write_jsonl(inputs, out(kGenInputs));
    return {{"labels", prefiltered.size()}, {"rebalanced", extra.size()},
            {"capped", before_cap - inputs.size()}, {"jobs", inputs.size()}};
  }

  nlohmann::ordered_json generate() {
    const auto inputs = read_jsonl(out(kGenInputs));
    const auto source = load_lang(config_.source_train, config_.source_lang, "source_train");
    const auto jobs = make_generation_jobs(config_, inputs, source);
    const auto outcomes = generate_batch(llm(), jobs);

    LabeledDataset generated;
    std::vector<RejectionRecord> failures;
    for (const auto& job : jobs) {
      const auto& outcome = outcomes.at(job.id);
      if (const auto* failed = std::get_if<GenerationFailed>(&outcome)) {
        failures.push_back({job.id, RejectionStage::GenerationFailed, {{"reason", failed->reason}}});
        continue;
      }
      auto text = text::trim(std::get<std::string>(outcome));
      if (text.empty()) {
        failures.push_back({job.id, RejectionStage::GenerationFailed, {{"reason", "empty generation"}}});
        continue;
      }
      generated.push_back({job.id, job.lang, std::move(text), job.label, Origin::Generated});
    }
    write_jsonl(generated, out(kGeneratedRaw));
    write_rejections(failures, out(kGenerationFailures));
    return {{"jobs", jobs.size()}, {"generated", generated.size()}, {"failed", failures.size()}};
  }

  nlohmann::ordered_json postfilter() {
    RemotePredictor predictor(absa(), stage1_model());
    const auto result = filter_generated(read_jsonl(out(kGeneratedRaw)), predictor);
    write_jsonl(result.kept, out(kGenerated));
    write_rejections(result.rejected, out(kPostfilterRejections));
    std::size_t missing = 0;
    for (const auto& r : result.rejected) missing += r.stage == RejectionStage::MissingAspect;
    return {{"kept", result.kept.size()},
            {"missing_aspect", missing},
            {"inconsistent_prediction", result.rejected.size() - missing}};
  }

  nlohmann::ordered_json merge() {
    const auto source = load_lang(config_.source_train, config_.source_lang, "source_train");
    LabeledDataset pseudo;
    if (config_.mode == RunMode::Laca) {
      pseudo = read_jsonl(out(kGenerated));
    } else {
      pseudo = read_jsonl(out(kPredicted));
      if (config_.max_generated) {
        Rng cap_rng(mix_seed(config_.seed, kCapStream));
        pseudo = cap_generated(pseudo, *config_.max_generated, cap_rng);
      }
    }
    const auto merged = merge_datasets(source, pseudo, config_.seed);
    write_jsonl(merged, out(kMerged));
    return {{"source", source.size()}, {"pseudo", pseudo.size()}, {"total", merged.size()}};
  }

  nlohmann::ordered_json train2() {
    const auto init_from = stage1_model();
    auto models = nlohmann::ordered_json::array();
    for (auto s : config_.seeds) {
      auto hp = train_hyperparams();
      hp["init_from"] = init_from;
      TrainRequest req{file_uri(out(kMerged)), config_.absa_backbone, hp, s};
      models.push_back({{"seed", s}, {"model", absa().train(req).model}});
    }
    nlohmann::ordered_json j;
    j["backbone"] = config_.absa_backbone;
    j["init_from"] = init_from;
    j["lr_schedule"] = "server default";
    j["models"] = models;
    write_json(out(kTrain2), j);
    return {{"models", models.size()}};
  }

  nlohmann::ordered_json evaluate() {
    const auto models =
        models_of(read_json(out(config_.mode == RunMode::ZeroShot ? kTrain1 : kTrain2)));
    nlohmann::ordered_json j;
    if (!config_.target_test) {
      j["skipped"] = "no target_test configured";
      write_json(out(kEval), j);
      return {{"runs", 0}};
    }
    const auto test = load_lang(*config_.target_test, config_.target_lang, "target_test");
    auto runs = nlohmann::ordered_json::array();
    std::vector<EvalReport> reports;
    for (const auto& [seed, model] : models) {
      const auto predicted = predict_all(absa(), model, config_.target_lang, test);
      write_jsonl(predicted, out(eval_predictions_file(seed).c_str()));
      const auto report = micro_f1(test, predicted);
      reports.push_back(report);
      nlohmann::ordered_json run;
      run["seed"] = seed;
      run["model"] = model;
      run["report"] = report_to_json(report);
      run["errors"] = taxonomy_to_json(classify_errors(test, predicted));
      runs.push_back(std::move(run));
    }
    const auto agg = aggregate_runs(reports);
    j["runs"] = std::move(runs);
    j["aggregate"] = aggregate_to_json(agg);
    write_json(out(kEval), j);
    return {{"runs", reports.size()}, {"mean_f1", agg.mean}};
  }

  const RunConfig& config_;
  const RunOptions& options_;
  RunManifest manifest_;
  fs::path work_;
  fs::path manifest_path_;
  Backends backends_;
};

}  // namespace

RunManifest run_pipeline(const RunConfig& config, const RunOptions& options) {
  config.validate();
  RunManifest m;
  if (options.resume && fs::exists(config.work_dir / kManifestFile)) {
    m = load_manifest(config.work_dir / kManifestFile);
    if (m.config_hash != config.hash) {
      throw ConfigDrift("config changed since the manifest was written (" + m.config_hash.substr(0, 12) +
                        " -> " + config.hash.substr(0, 12) + ")");
    }
  } else {
    m.config_hash = config.hash;
    m.config_path = config.path;
    m.mode = config.mode;
  }
  return Runner(config, options, std::move(m)).run();
}

RunManifest resume(const RunConfig& config, RunOptions options) {
  options.resume = true;
  return run_pipeline(config, options);
}

RunManifest resume(const fs::path& manifest_path, RunOptions options) {
  const auto m = load_manifest(manifest_path);
  if (m.config_path.empty()) throw ConfigInvalid("manifest does not record its config file");
  return resume(load_run_config(m.config_path), std::move(options));
}

}  // namespace laca
