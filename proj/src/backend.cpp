#include "laca/backend.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "laca/corpus.hpp"
#include "laca/errors.hpp"

namespace laca {

void SamplingParams::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw ConfigInvalid("sampling.top_p must be in (0, 1], got " + std::to_string(top_p));
  }
  if (!(temperature >= 0.0)) {
    throw ConfigInvalid("sampling.temperature must be non-negative");
  }
  if (max_tokens <= 0) throw ConfigInvalid("sampling.max_tokens must be positive");
}

void BackendConfig::validate() const {
  if (max_in_flight < 1) throw ConfigInvalid("max_in_flight must be >= 1");
  if (max_retries < 0) throw ConfigInvalid("max_retries must be >= 0");
  if (!(timeout_s > 0.0)) throw ConfigInvalid("timeout_s must be positive");
  if (batch_size == 0) throw ConfigInvalid("batch_size must be >= 1");
  if (backoff_base_s < 0.0 || backoff_jitter < 0.0 || backoff_jitter >= 1.0) {
    throw ConfigInvalid("backoff settings out of range");
  }
}

namespace wire {

namespace {

std::string excerpt(const nlohmann::json& j) {
  auto s = j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  if (s.size() > 512) s = s.substr(0, 512) + "...";
  return s;
}

[[noreturn]] void violation(const std::string& what, const nlohmann::json& payload) {
  spdlog::error("protocol violation: {}; payload: {}", what, excerpt(payload));
  throw ProtocolViolation(what + "; payload: " + excerpt(payload));
}

const nlohmann::json& require(const nlohmann::json& j, const char* key,
                              nlohmann::json::value_t type, const nlohmann::json& payload) {
  if (!j.is_object() || !j.contains(key)) violation(std::string("missing field '") + key + "'", payload);
  const auto& v = j[key];
  const bool ok = type == nlohmann::json::value_t::number_float ? v.is_number() : v.type() == type;
  if (!ok) violation(std::string("field '") + key + "' has the wrong type", payload);
  return v;
}

using vt = nlohmann::json::value_t;

}  // namespace

std::uint64_t wire_seed(std::uint64_t seed) { return seed & ((std::uint64_t{1} << 53) - 1); }

nlohmann::ordered_json encode(const PredictRequest& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["lang"] = r.lang;
  j["sentences"] = nlohmann::ordered_json::array();
  for (const auto& s : r.sentences) j["sentences"].push_back({{"id", s.id}, {"text", s.text}});
  return j;
}

nlohmann::ordered_json encode(const PredictResponse& r) {
  nlohmann::ordered_json j;
  j["predictions"] = nlohmann::ordered_json::array();
  for (const auto& p : r.predictions) {
    nlohmann::ordered_json pj;
    pj["id"] = p.id;
    pj["tuples"] = nlohmann::ordered_json::array();
    for (const auto& t : p.tuples) {
      auto tj = tuple_to_json(t);
      tj.erase("category");
      pj["tuples"].push_back(std::move(tj));
    }
    j["predictions"].push_back(std::move(pj));
  }
  return j;
}

nlohmann::ordered_json encode(const GenerateRequest& r) {
  nlohmann::ordered_json j;
  j["prompt"] = r.prompt;
  j["sampling"] = {{"top_p", r.sampling.top_p},
                   {"temperature", r.sampling.temperature},
                   {"max_tokens", r.sampling.max_tokens}};
  j["stop"] = r.stop;
  if (r.seed) j["seed"] = wire_seed(*r.seed);
  return j;
}

nlohmann::ordered_json encode(const GenerateResponse& r) {
  nlohmann::ordered_json j;
  j["text"] = r.text;
  return j;
}

nlohmann::ordered_json encode(const TrainRequest& r) {
  nlohmann::ordered_json j;
  j["dataset_uri"] = r.dataset_uri;
  j["backbone"] = r.backbone;
  j["hyperparams"] = r.hyperparams;
  j["seed"] = wire_seed(r.seed);
  return j;
}

nlohmann::ordered_json encode(const TrainResponse& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  return j;
}

PredictRequest decode_predict_request(const nlohmann::json& j) {
  PredictRequest r;
  r.model = require(j, "model", vt::string, j).get<std::string>();
  r.lang = require(j, "lang", vt::string, j).get<std::string>();
  for (const auto& s : require(j, "sentences", vt::array, j)) {
    r.sentences.push_back({require(s, "id", vt::string, j).get<std::string>(),
                           require(s, "text", vt::string, j).get<std::string>()});
  }
  return r;
}

PredictResponse decode_predict_response(const nlohmann::json& j) {
  PredictResponse r;
  for (const auto& p : require(j, "predictions", vt::array, j)) {
    Prediction pred;
    pred.id = require(p, "id", vt::string, j).get<std::string>();
    for (const auto& t : require(p, "tuples", vt::array, j)) {
      try {
        pred.tuples.insert(tuple_from_json(t));
      } catch (const std::invalid_argument& e) {
        violation(std::string("bad tuple for id '") + pred.id + "': " + e.what(), j);
      }
    }
    r.predictions.push_back(std::move(pred));
  }
  return r;
}

GenerateRequest decode_generate_request(const nlohmann::json& j) {
  GenerateRequest r;
  r.prompt = require(j, "prompt", vt::string, j).get<std::string>();
  const auto& s = require(j, "sampling", vt::object, j);
  r.sampling.top_p = require(s, "top_p", vt::number_float, j).get<double>();
  r.sampling.temperature = require(s, "temperature", vt::number_float, j).get<double>();
  const auto& mt = require(s, "max_tokens", vt::number_float, j);
  if (!mt.is_number_integer()) violation("field 'max_tokens' must be an integer", j);
  r.sampling.max_tokens = mt.get<int>();
  r.stop.clear();
  for (const auto& stop : require(j, "stop", vt::array, j)) {
    if (!stop.is_string()) violation("stop sequences must be strings", j);
    r.stop.push_back(stop.get<std::string>());
  }
  if (j.contains("seed") && !j["seed"].is_null()) {
    if (!j["seed"].is_number_unsigned()) violation("field 'seed' must be a non-negative integer", j);
    r.seed = j["seed"].get<std::uint64_t>();
  }
  return r;
}

GenerateResponse decode_generate_response(const nlohmann::json& j) {
  return {require(j, "text", vt::string, j).get<std::string>()};
}

TrainRequest decode_train_request(const nlohmann::json& j) {
  TrainRequest r;
  r.dataset_uri = require(j, "dataset_uri", vt::string, j).get<std::string>();
  r.backbone = require(j, "backbone", vt::string, j).get<std::string>();
  r.hyperparams = require(j, "hyperparams", vt::object, j);
  const auto& seed = require(j, "seed", vt::number_float, j);
  if (!seed.is_number_unsigned()) violation("field 'seed' must be a non-negative integer", j);
  r.seed = seed.get<std::uint64_t>();
  return r;
}

TrainResponse decode_train_response(const nlohmann::json& j) {
  return {require(j, "model", vt::string, j).get<std::string>()};
}

void validate(const PredictRequest& request, const PredictResponse& response) {
  std::unordered_map<std::string_view, const SentenceRef*> by_id;
  for (const auto& s : request.sentences) by_id.emplace(s.id, &s);
  std::unordered_set<std::string_view> seen;
  const auto payload = encode(response);
  for (const auto& p : response.predictions) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) violation("response contains unknown id '" + p.id + "'", payload);
    if (!seen.insert(p.id).second) violation("response repeats id '" + p.id + "'", payload);
    for (const auto& t : p.tuples) {
      if (t.span && !span_matches(it->second->text, *t.span, t.aspect)) {
        violation("span of '" + t.aspect + "' does not match sentence '" + p.id + "'", payload);
      }
    }
  }
  if (seen.size() != by_id.size()) {
    violation("response covers " + std::to_string(seen.size()) + " of " +
                  std::to_string(by_id.size()) + " requested ids",
              payload);
  }
}

}  // namespace wire

namespace {

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(const BackendConfig& config) : timeout_s_(config.timeout_s) {
    // Split "scheme://host:port/prefix" into the client origin and a path prefix.
    const auto& url = config.base_url;
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    origin_ = path_start == std::string::npos ? url : url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (config.auth_token) {
      token_ = *config.auth_token;
    } else if (const char* env = std::getenv(kTokenEnvVar)) {
      token_ = env;
    }
  }

  TransportResponse post(const std::string& path, const std::string& body) override {
    httplib::Client client(origin_);
    if (!client.is_valid()) return {0, "", "invalid backend URL '" + origin_ + "'"};
    const auto secs = static_cast<time_t>(timeout_s_);
    const auto usecs = static_cast<time_t>((timeout_s_ - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    auto result = client.Post(prefix_ + path, headers, body, "application/json");
    if (!result) return {0, "", httplib::to_string(result.error())};
    return {result->status, result->body, ""};
  }

 private:
  std::string origin_;
  std::string prefix_;
  std::string token_;
  double timeout_s_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport(const BackendConfig& config) {
  return std::make_shared<HttpTransport>(config);
}

BackendClient::BackendClient(BackendConfig config, std::shared_ptr<Transport> transport,
                             Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      in_flight_(std::max(config_.max_in_flight, 1)) {
  config_.validate();
  if (!transport_) throw ConfigInvalid("backend client needs a transport");
  if (!sleeper_) {
    sleeper_ = [](double s) {
      std::this_thread::sleep_for(std::chrono::duration<double>(s));
    };
  }
}

double BackendClient::backoff_delay(int retry) {
  thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
  std::uniform_real_distribution<double> jitter(1.0 - config_.backoff_jitter,
                                                1.0 + config_.backoff_jitter);
  return config_.backoff_base_s * std::ldexp(1.0, retry) * jitter(jitter_rng);
}

nlohmann::json BackendClient::call(std::string_view path, const nlohmann::ordered_json& body) {
  const std::string payload = body.dump();
  const std::string route(path);
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    TransportResponse response;
    in_flight_.acquire();
    try {
      response = transport_->post(route, payload);
    } catch (...) {
      in_flight_.release();
      throw;
    }
    in_flight_.release();

    if (response.status >= 200 && response.status < 300) {
      try {
        return nlohmann::json::parse(response.body);
      } catch (const nlohmann::json::parse_error& e) {
        spdlog::error("unparseable response from {}: {}", route, response.body.substr(0, 512));
        throw ProtocolViolation(route + ": response is not JSON: " + e.what());
      }
    }
    const bool retryable = response.status == 0 || response.status == 429 || response.status >= 500;
    if (!retryable) {
      throw ProtocolViolation(route + ": HTTP " + std::to_string(response.status) + ": " +
                              response.body.substr(0, 512));
    }
    last_error = response.status == 0 ? response.error : "HTTP " + std::to_string(response.status);
    if (attempt < config_.max_retries) {
      const double delay = backoff_delay(attempt);
      spdlog::debug("{} attempt {} failed ({}), retrying in {:.2f}s", route, attempt + 1,
                    last_error, delay);
      sleeper_(delay);
    }
  }
  throw BackendUnavailable(route + ": giving up after " + std::to_string(config_.max_retries + 1) +
                           " attempts: " + last_error);
}

PredictResponse BackendClient::predict(const PredictRequest& request) {
  auto response = wire::decode_predict_response(call(kPredictPath, wire::encode(request)));
  wire::validate(request, response);
  return response;
}

GenerateResponse BackendClient::generate(const GenerateRequest& request) {
  return wire::decode_generate_response(call(kGeneratePath, wire::encode(request)));
}

TrainResponse BackendClient::train(const TrainRequest& request) {
  return wire::decode_train_response(call(kTrainPath, wire::encode(request)));
}

namespace {

// Runs task(i) for i in [0, n) on up to `workers` threads. The first
// exception thrown by any task is rethrown after all threads join.
template <typename Task>
void parallel_for(std::size_t n, int workers, Task task) {
  const auto count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  if (count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(count);
    for (std::size_t t = 0; t < count; ++t) threads.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::map<std::string, TupleSet> predict_batch(BackendClient& client, const std::string& model,
                                              const LanguageCode& lang,
                                              std::span<const LabeledExample> examples) {
  std::map<std::string, TupleSet> out;
  if (examples.empty()) return out;
  const std::size_t batch = client.config().batch_size;
  const std::size_t n_batches = (examples.size() + batch - 1) / batch;
  std::mutex out_mutex;
  parallel_for(n_batches, client.config().max_in_flight, [&](std::size_t b) {
    PredictRequest request{model, lang.str(), {}};
    const auto end = std::min(examples.size(), (b + 1) * batch);
    for (std::size_t i = b * batch; i < end; ++i) {
      request.sentences.push_back({examples[i].id, examples[i].text});
    }
    auto response = client.predict(request);
    std::lock_guard lock(out_mutex);
    for (auto& p : response.predictions) out[p.id] = std::move(p.tuples);
  });
  return out;
}

std::map<std::string, GenerationOutcome> generate_batch(BackendClient& client,
                                                        std::span<const GenerationJob> jobs) {
  std::map<std::string, GenerationOutcome> out;
  std::mutex out_mutex;
  parallel_for(jobs.size(), client.config().max_in_flight, [&](std::size_t i) {
    const auto& job = jobs[i];
    GenerationOutcome outcome;
    try {
      GenerateRequest request{job.prompt, job.sampling, job.stop, job.seed};
      outcome = client.generate(request).text;
    } catch (const BackendError& e) {
      spdlog::warn("generation job {} dropped: {}", job.id, e.what());
      outcome = GenerationFailed{e.what()};
    }
    std::lock_guard lock(out_mutex);
    out.insert_or_assign(job.id, std::move(outcome));
  });
  return out;
}

}  // namespace laca
