#pragma once

// Wire protocol to the ABSA predictor and LLM generator services, plus a
// client with retries, batching and a bounded number of in-flight requests.
//
//   POST /v1/predict   {"model", "lang", "sentences": [{"id", "text"}]}
//                   -> {"predictions": [{"id", "tuples": [...]}]}
//   POST /v1/generate  {"prompt", "sampling": {"top_p", "temperature",
//                       "max_tokens"}, "stop": [...], "seed"?}
//                   -> {"text"}
//   POST /v1/train     {"dataset_uri", "backbone", "hyperparams", "seed"}
//                   -> {"model"}

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "laca/job.hpp"
#include "laca/types.hpp"

namespace laca {

inline constexpr std::string_view kPredictPath = "/v1/predict";
inline constexpr std::string_view kGeneratePath = "/v1/generate";
inline constexpr std::string_view kTrainPath = "/v1/train";

/// Name of the environment variable holding the bearer token.
inline constexpr const char* kTokenEnvVar = "LACA_BACKEND_TOKEN";

struct SentenceRef {
  std::string id;
  std::string text;
};

struct PredictRequest {
  std::string model;
  std::string lang;
  std::vector<SentenceRef> sentences;
};

struct Prediction {
  std::string id;
  TupleSet tuples;
};

struct PredictResponse {
  std::vector<Prediction> predictions;
};

struct GenerateRequest {
  std::string prompt;
  SamplingParams sampling;
  std::vector<std::string> stop = kDefaultStop;
  std::optional<std::uint64_t> seed;
};

struct GenerateResponse {
  std::string text;
};

struct TrainRequest {
  std::string dataset_uri;
  std::string backbone;
  nlohmann::json hyperparams = nlohmann::json::object();
  std::uint64_t seed = 0;
};

struct TrainResponse {
  std::string model;
};

namespace wire {

// Encoders never fail; decoders throw ProtocolViolation with the offending
// payload in the message.
nlohmann::ordered_json encode(const PredictRequest& r);
nlohmann::ordered_json encode(const PredictResponse& r);
nlohmann::ordered_json encode(const GenerateRequest& r);
nlohmann::ordered_json encode(const GenerateResponse& r);
nlohmann::ordered_json encode(const TrainRequest& r);
nlohmann::ordered_json encode(const TrainResponse& r);

PredictRequest decode_predict_request(const nlohmann::json& j);
PredictResponse decode_predict_response(const nlohmann::json& j);
GenerateRequest decode_generate_request(const nlohmann::json& j);
GenerateResponse decode_generate_response(const nlohmann::json& j);
TrainRequest decode_train_request(const nlohmann::json& j);
TrainResponse decode_train_response(const nlohmann::json& j);

/// Response ids must be a permutation of the request ids and every span must
/// cover its aspect in the corresponding sentence. Throws ProtocolViolation.
void validate(const PredictRequest& request, const PredictResponse& response);

/// Seeds travel as JSON integers; masked to 53 bits so that peers parsing
/// numbers as doubles still see the exact value.
std::uint64_t wire_seed(std::uint64_t seed);

}  // namespace wire

struct BackendConfig {
  std::string base_url;
  double timeout_s = 60.0;
  /// Retries after the first attempt.
  int max_retries = 3;
  int max_in_flight = 4;
  std::optional<std::string> auth_token;
  /// Backoff before retry i (0-based) is base * 2^i, jittered by ±jitter.
  double backoff_base_s = 1.0;
  double backoff_jitter = 0.2;
  /// Sentences per /v1/predict request.
  std::size_t batch_size = 32;

  /// Throws ConfigInvalid.
  void validate() const;
};

/// Outcome of one HTTP exchange. status == 0 means the request never got a
/// response (connection refused, timeout, ...).
struct TransportResponse {
  int status = 0;
  std::string body;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResponse post(const std::string& path, const std::string& body) = 0;
};

/// HTTP transport; one connection per call, so instances are thread-safe.
std::shared_ptr<Transport> make_http_transport(const BackendConfig& config);

/// Routes requests to an in-process handler (mock services, fault injection).
class HandlerTransport : public Transport {
 public:
  using Handler = std::function<TransportResponse(const std::string& path, const std::string& body)>;
  explicit HandlerTransport(Handler handler) : handler_(std::move(handler)) {}
  TransportResponse post(const std::string& path, const std::string& body) override {
    return handler_(path, body);
  }

 private:
  Handler handler_;
};

/// Thread-safe. At most config.max_in_flight requests are outstanding at any
/// time across all threads sharing the client.
class BackendClient {
 public:
  using Sleeper = std::function<void(double seconds)>;

  BackendClient(BackendConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper = {});

  /// Posts with retries on transport failures and 5xx/429 responses. Throws
  /// BackendUnavailable once retries are exhausted, ProtocolViolation on any
  /// other 4xx or an unparseable body.
  nlohmann::json call(std::string_view path, const nlohmann::ordered_json& body);

  PredictResponse predict(const PredictRequest& request);
  GenerateResponse generate(const GenerateRequest& request);
  TrainResponse train(const TrainRequest& request);

  const BackendConfig& config() const { return config_; }

 private:
  double backoff_delay(int retry);

  BackendConfig config_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  std::counting_semaphore<> in_flight_;
};

/// Predicts every example, batching by config.batch_size and fanning batches
/// out under the client's concurrency limit. Keyed by example id.
std::map<std::string, TupleSet> predict_batch(BackendClient& client, const std::string& model,
                                              const LanguageCode& lang,
                                              std::span<const LabeledExample> examples);

struct GenerationFailed {
  std::string reason;
  bool operator==(const GenerationFailed&) const = default;
};

using GenerationOutcome = std::variant<std::string, GenerationFailed>;

/// Runs every job; failures are recorded per job and never abort the batch.
std::map<std::string, GenerationOutcome> generate_batch(BackendClient& client,
                                                        std::span<const GenerationJob> jobs);

}  // namespace laca
