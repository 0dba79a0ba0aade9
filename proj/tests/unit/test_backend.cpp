#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <doctest.h>
#include <httplib.h>

#include "laca/backend.hpp"
#include "laca/errors.hpp"
#include "laca/genformat.hpp"
#include "laca/mock.hpp"
#include "laca/promptgen.hpp"

using namespace laca;
using nlohmann::json;

namespace {

const auto kEn = LanguageCode::parse("en");
const auto kEs = LanguageCode::parse("es");

SentimentTuple tup(std::string aspect, Polarity p) { return {std::move(aspect), p, std::nullopt, std::nullopt}; }

BackendConfig fast_config(int in_flight = 4) {
  BackendConfig c;
  c.base_url = "http://unused";
  c.max_in_flight = in_flight;
  c.batch_size = 2;
  return c;
}

std::shared_ptr<Transport> handler(HandlerTransport::Handler h) {
  return std::make_shared<HandlerTransport>(std::move(h));
}

BackendClient::Sleeper recording(std::vector<double>& delays) {
  return [&delays](double s) { delays.push_back(s); };
}

std::shared_ptr<mock::MockService> service(mock::MockServiceOptions opts = {}) {
  return std::make_shared<mock::MockService>(std::move(opts));
}

GenerationJob job(const std::string& id, TupleSet label, std::uint64_t seed) {
  GenerationJob j;
  j.id = id;
  j.label = label;
  j.lang = kEs;
  j.prompt = build_generation_prompt(label, kEs, {});
  j.seed = seed;
  return j;
}

}  // namespace

TEST_CASE("wire formats round trip") {
  PredictRequest pr{"m1", "es", {{"a", "El té"}, {"b", ""}}};
  auto back = wire::decode_predict_request(json::parse(wire::encode(pr).dump()));
  CHECK(back.model == "m1");
  CHECK(back.sentences.size() == 2);
  CHECK(back.sentences[0].text == "El té");

  CHECK(wire::encode(pr).dump() ==
        R"({"model":"m1","lang":"es","sentences":[{"id":"a","text":"El té"},{"id":"b","text":""}]})");

  GenerateRequest gr{"prompt", {}, kDefaultStop, 7};
  CHECK(wire::encode(gr).dump() ==
        R"({"prompt":"prompt","sampling":{"top_p":0.8,"temperature":0.8,"max_tokens":128},"stop":["\n\n"],"seed":7})");
  GenerateRequest unseeded{"p", {}, {}, std::nullopt};
  CHECK_FALSE(wire::encode(unseeded).contains("seed"));
  CHECK(wire::decode_generate_request(json::parse(wire::encode(gr).dump())).seed == 7u);

  TrainRequest tr{"file:///tmp/x.jsonl", "xlm-roberta-base", {{"init_from", "m0"}}, 3};
  CHECK(wire::encode(tr).dump() ==
        R"({"dataset_uri":"file:///tmp/x.jsonl","backbone":"xlm-roberta-base","hyperparams":{"init_from":"m0"},"seed":3})");
  CHECK(wire::decode_train_response(json{{"model", "abc"}}).model == "abc");
  CHECK(wire::decode_generate_response(json{{"text", "hola"}}).text == "hola");

  PredictResponse resp{{{"a", TupleSet{{"té", Polarity::Positive, CharSpan{3, 5}, std::nullopt}}}}};
  CHECK(wire::encode(resp).dump() ==
        R"({"predictions":[{"id":"a","tuples":[{"aspect":"té","polarity":"positive","from":3,"to":5}]}]})");
}

TEST_CASE("decoders reject malformed payloads") {
  CHECK_THROWS_AS(wire::decode_predict_response(json{{"predictions", 3}}), ProtocolViolation);
  CHECK_THROWS_AS(wire::decode_predict_response(json::parse(R"({"predictions":[{"id":"a","tuples":[{"aspect":"x","polarity":"great"}]}]})")),
                  ProtocolViolation);
  CHECK_THROWS_AS(wire::decode_generate_response(json::object()), ProtocolViolation);
  CHECK_THROWS_AS(wire::decode_train_response(json{{"model", 1}}), ProtocolViolation);
  CHECK_THROWS_AS(wire::decode_predict_request(json{{"model", "m"}}), ProtocolViolation);
  CHECK_THROWS_AS(wire::decode_generate_request(json{{"prompt", "p"}, {"sampling", {{"top_p", "high"}}}}),
                  ProtocolViolation);
}

TEST_CASE("seeds are masked to 53 bits on the wire") {
  CHECK(wire::wire_seed(5) == 5);
  CHECK(wire::wire_seed(~std::uint64_t{0}) == (std::uint64_t{1} << 53) - 1);
}

TEST_CASE("response validation") {
  PredictRequest req{"m", "en", {{"a", "Great tea"}, {"b", "x"}}};
  PredictResponse ok{{{"b", {}}, {"a", TupleSet{{"tea", Polarity::Positive, CharSpan{6, 9}, std::nullopt}}}}};
  CHECK_NOTHROW(wire::validate(req, ok));
  PredictResponse extra = ok;
  extra.predictions.push_back({"c", {}});
  CHECK_THROWS_AS(wire::validate(req, extra), ProtocolViolation);
  PredictResponse missing{{{"a", {}}}};
  CHECK_THROWS_AS(wire::validate(req, missing), ProtocolViolation);
  PredictResponse dup{{{"a", {}}, {"a", {}}}};
  CHECK_THROWS_AS(wire::validate(req, dup), ProtocolViolation);
  PredictResponse bad_span{{{"b", {}}, {"a", TupleSet{{"tea", Polarity::Positive, CharSpan{0, 3}, std::nullopt}}}}};
  CHECK_THROWS_AS(wire::validate(req, bad_span), ProtocolViolation);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(fast_config().validate());
  auto c = fast_config();
  c.max_in_flight = 0;
  CHECK_THROWS_AS(c.validate(), ConfigInvalid);
  c = fast_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigInvalid);
  c = fast_config();
  c.max_retries = -1;
  CHECK_THROWS_AS(c.validate(), ConfigInvalid);
  CHECK_THROWS_AS(BackendClient(fast_config(), nullptr), ConfigInvalid);
}

TEST_CASE("retries with exponential backoff then gives up") {
  std::atomic<int> attempts{0};
  std::vector<double> delays;
  BackendClient client(fast_config(), handler([&](const std::string&, const std::string&) {
                         ++attempts;
                         return TransportResponse{503, "busy", ""};
                       }),
                       recording(delays));
  CHECK_THROWS_AS(client.generate({"p", {}, kDefaultStop, 1}), BackendUnavailable);
  CHECK(attempts == 4);
  REQUIRE(delays.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const double nominal = std::ldexp(1.0, static_cast<int>(i));
    CHECK(delays[i] >= 0.8 * nominal - 1e-12);
    CHECK(delays[i] <= 1.2 * nominal + 1e-12);
  }
}

TEST_CASE("transient failures are retried until success") {
  for (int status : {0, 429, 500, 502}) {
    std::atomic<int> attempts{0};
    std::vector<double> delays;
    BackendClient client(fast_config(), handler([&](const std::string&, const std::string&) {
                           if (++attempts < 3) return TransportResponse{status, "", "connection refused"};
                           return TransportResponse{200, R"({"text":"ok"})", ""};
                         }),
                         recording(delays));
    CHECK(client.generate({"p", {}, kDefaultStop, 1}).text == "ok");
    CHECK(attempts == 3);
    CHECK(delays.size() == 2);
  }
}

TEST_CASE("client errors are not retried") {
  std::atomic<int> attempts{0};
  std::vector<double> delays;
  BackendClient client(fast_config(), handler([&](const std::string&, const std::string&) {
                         ++attempts;
                         return TransportResponse{400, R"({"error":"bad"})", ""};
                       }),
                       recording(delays));
  CHECK_THROWS_AS(client.train({"file:///x", "b", json::object(), 1}), ProtocolViolation);
  CHECK(attempts == 1);
  CHECK(delays.empty());
}

TEST_CASE("unparseable success bodies are protocol violations") {
  BackendClient client(fast_config(), handler([](const std::string&, const std::string&) {
                         return TransportResponse{200, "<html>", ""};
                       }));
  CHECK_THROWS_AS(client.generate({"p", {}, kDefaultStop, 1}), ProtocolViolation);
}

TEST_CASE("in-flight requests never exceed the limit") {
  for (int limit : {1, 3}) {
    std::atomic<int> current{0};
    std::atomic<int> peak{0};
    auto svc = service();
    BackendClient client(fast_config(limit), handler([&](const std::string& path, const std::string& body) {
                           const int now = ++current;
                           int seen = peak.load();
                           while (now > seen && !peak.compare_exchange_weak(seen, now)) {
                           }
                           std::this_thread::sleep_for(std::chrono::milliseconds(2));
                           auto r = svc->handle(path, body);
                           --current;
                           return r;
                         }));
    std::vector<GenerationJob> jobs;
    for (int i = 0; i < 24; ++i) jobs.push_back(job("j" + std::to_string(i), {tup("tea", Polarity::Positive)}, i));
    // Several threads share one client.
    std::vector<std::thread> threads;
    for (int t = 0; t < 3; ++t) threads.emplace_back([&] { generate_batch(client, jobs); });
    for (auto& t : threads) t.join();
    CHECK(peak.load() <= limit);
    CHECK(peak.load() >= 1);
  }
}

TEST_CASE("predict_batch against the lexicon mock") {
  mock::MockServiceOptions opts;
  opts.base_lexicon = mock::make_lexicon({{"tea", Polarity::Positive}});
  auto svc = service(opts);
  BackendClient client(fast_config(), svc->transport());
  LabeledDataset inputs = {{"a", kEn, "Great tea", {}, Origin::Gold},
                           {"b", kEn, "", {}, Origin::Gold},
                           {"c", kEn, "No drinks", {}, Origin::Gold}};
  const auto out = predict_batch(client, "base", kEn, inputs);
  REQUIRE(out.size() == 3);
  CHECK(out.at("a") == TupleSet{{"tea", Polarity::Positive, CharSpan{6, 9}, std::nullopt}});
  CHECK(out.at("b").empty());
  CHECK(out.at("c").empty());
  CHECK(svc->calls(kPredictPath) == 2);
}

TEST_CASE("predict_batch rejects a server that invents ids") {
  BackendClient client(fast_config(), handler([](const std::string&, const std::string& body) {
                         auto req = json::parse(body);
                         json resp = {{"predictions", json::array()}};
                         for (const auto& s : req["sentences"]) resp["predictions"].push_back({{"id", s["id"]}, {"tuples", json::array()}});
                         resp["predictions"].push_back({{"id", "intruder"}, {"tuples", json::array()}});
                         return TransportResponse{200, resp.dump(), ""};
                       }));
  LabeledDataset inputs = {{"a", kEn, "x", {}, Origin::Gold}};
  CHECK_THROWS_AS(predict_batch(client, "m", kEn, inputs), ProtocolViolation);
}

TEST_CASE("generate_batch against the template mock") {
  auto svc = service();
  BackendClient client(fast_config(), svc->transport());
  std::vector<GenerationJob> jobs = {job("a", {tup("servicio", Polarity::Positive)}, 1),
                                     job("b", {tup("comida", Polarity::Negative)}, 2),
                                     job("c", {tup("té", Polarity::Neutral), tup("postre", Polarity::Positive)}, 3)};
  const auto first = generate_batch(client, jobs);
  const auto second = generate_batch(client, jobs);
  REQUIRE(first.size() == 3);
  CHECK(first == second);
  CHECK(std::get<std::string>(first.at("a")) == mock::mock_llm_generate(jobs[0].label, kEs));
  CHECK(std::get<std::string>(first.at("c")).find("postre") != std::string::npos);
  CHECK(generate_batch(client, {}).empty());
}

TEST_CASE("one failing job does not sink the batch") {
  auto svc = service();
  std::vector<double> delays;
  BackendClient client(fast_config(), handler([&](const std::string& path, const std::string& body) {
                         if (body.find("poison") != std::string::npos) return TransportResponse{0, "", "timed out"};
                         return svc->handle(path, body);
                       }),
                       recording(delays));
  std::vector<GenerationJob> jobs = {job("a", {tup("servicio", Polarity::Positive)}, 1),
                                     job("b", {tup("poison", Polarity::Positive)}, 2),
                                     job("c", {tup("comida", Polarity::Negative)}, 3)};
  const auto out = generate_batch(client, jobs);
  REQUIRE(out.size() == 3);
  CHECK(std::holds_alternative<std::string>(out.at("a")));
  CHECK(std::holds_alternative<GenerationFailed>(out.at("b")));
  CHECK(std::holds_alternative<std::string>(out.at("c")));
}

TEST_CASE("mock fault rates match their configuration") {
  const double f = 0.1;
  mock::MockServiceOptions opts;
  opts.generate_fail_rate = f;
  auto svc = service(opts);
  std::vector<double> delays;
  BackendClient client(fast_config(8), svc->transport(), recording(delays));
  const std::size_t n = 1000;
  std::vector<GenerationJob> jobs;
  for (std::size_t i = 0; i < n; ++i) {
    jobs.push_back(job("j" + std::to_string(i), {tup("servicio", Polarity::Positive)}, job_seed(42, i)));
  }
  const auto out = generate_batch(client, jobs);
  std::size_t failed = 0;
  for (const auto& [id, o] : out) failed += std::holds_alternative<GenerationFailed>(o);
  const double sigma = std::sqrt(n * f * (1 - f));
  CHECK(std::abs(static_cast<double>(failed) - n * f) <= 3 * sigma);
  // A poisoned job fails on every attempt.
  CHECK(svc->calls(kGeneratePath) == n + 3 * failed);
}

TEST_CASE("mock aspect drop and extra-term rates") {
  mock::MockServiceOptions opts;
  opts.base_lexicon = mock::make_lexicon({{"cerveza", Polarity::Positive}, {"servicio", Polarity::Negative}});
  opts.drop_aspect_rate = 0.2;
  opts.extra_term_rate = 0.3;
  auto svc = service(opts);
  BackendClient client(fast_config(8), svc->transport());
  const std::size_t n = 1000;
  std::vector<GenerationJob> jobs;
  for (std::size_t i = 0; i < n; ++i) {
    jobs.push_back(job("j" + std::to_string(i), {tup("comida", Polarity::Positive), tup("postre", Polarity::Negative)},
                       job_seed(7, i)));
  }
  std::size_t dropped = 0, extra = 0;
  for (const auto& [id, o] : generate_batch(client, jobs)) {
    const auto& text = std::get<std::string>(o);
    dropped += text.find("comida") == std::string::npos || text.find("postre") == std::string::npos;
    extra += text.find("cerveza") != std::string::npos || text.find("servicio") != std::string::npos;
  }
  CHECK(std::abs(static_cast<double>(dropped) - n * 0.2) <= 3 * std::sqrt(n * 0.2 * 0.8));
  CHECK(std::abs(static_cast<double>(extra) - n * 0.3) <= 3 * std::sqrt(n * 0.3 * 0.7));
}

TEST_CASE("HTTP transport speaks the wire protocol with bearer auth") {
  auto svc = service({mock::make_lexicon({{"tea", Polarity::Positive}}), {}, true, 0, 0, 0});
  httplib::Server server;
  std::mutex auth_mutex;
  std::vector<std::string> auth_headers;
  for (auto path : {kPredictPath, kGeneratePath, kTrainPath}) {
    server.Post(std::string("/api") + std::string(path), [&, path](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(auth_mutex);
        auth_headers.push_back(req.get_header_value("Authorization"));
      }
      const auto r = svc->handle(std::string(path), req.body);
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
  }
  server.Post("/api/v1/flaky", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto config = fast_config();
  config.base_url = "http://127.0.0.1:" + std::to_string(port) + "/api";
  config.auth_token = "secret";
  config.backoff_base_s = 0.001;
  config.timeout_s = 5;
  BackendClient client(config, make_http_transport(config));
  LabeledDataset inputs = {{"a", kEn, "Great tea", {}, Origin::Gold}, {"b", kEn, "tea time", {}, Origin::Gold},
                           {"c", kEn, "nothing", {}, Origin::Gold}};
  const auto out = predict_batch(client, "base", kEn, inputs);
  CHECK(out.at("a").size() == 1);
  CHECK(out.at("c").empty());
  CHECK(client.generate({build_generation_prompt({tup("tea", Polarity::Positive)}, kEn, {}), {}, kDefaultStop, 1}).text ==
        "The tea was excellent.");
  CHECK_THROWS_AS(client.call("/v1/flaky", nlohmann::ordered_json::object()), BackendUnavailable);
  CHECK_THROWS_AS(client.call("/v1/missing", nlohmann::ordered_json::object()), ProtocolViolation);

  server.stop();
  thread.join();
  {
    std::lock_guard lock(auth_mutex);
    REQUIRE_FALSE(auth_headers.empty());
    for (const auto& h : auth_headers) CHECK(h == "Bearer secret");
  }

  // Nothing listens on the port any more: connection failures exhaust the retries.
  CHECK_THROWS_AS(client.generate({"p", {}, kDefaultStop, 1}), BackendUnavailable);
}

TEST_CASE("bearer token falls back to the environment") {
  ::setenv(kTokenEnvVar, "from-env", 1);
  httplib::Server server;
  std::string seen;
  server.Post("/v1/generate", [&](const httplib::Request& req, httplib::Response& res) {
    seen = req.get_header_value("Authorization");
    res.set_content(R"({"text":"x"})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  auto config = fast_config();
  config.base_url = "http://127.0.0.1:" + std::to_string(port);
  BackendClient client(config, make_http_transport(config));
  CHECK(client.generate({"p", {}, kDefaultStop, 1}).text == "x");
  server.stop();
  thread.join();
  ::unsetenv(kTokenEnvVar);
  CHECK(seen == "Bearer from-env");
}
