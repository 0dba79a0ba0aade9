#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "laca/corpus.hpp"
#include "laca/hash.hpp"
#include "../support/synth.hpp"

using namespace laca;
using laca::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result cli(const std::string& args, const TempDir& dir) {
  const auto out = dir / "stdout.txt";
  const auto cmd = std::string(LACA_CLI_PATH) + " -q " + args + " > " + out.string() + " 2> " +
                   (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(out)};
}

void write(const fs::path& p, const std::string& body) { std::ofstream(p) << body; }

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
  TempDir dir("cli");
  CHECK(cli("", dir).code == 2);
  CHECK(cli("frobnicate", dir).code == 2);
  CHECK(cli("evaluate --gold", dir).code == 2);
  CHECK(cli("run --config " + (dir / "absent.json").string(), dir).code == 2);
  write(dir / "bad.json", R"({"source_lang": "en"})");
  CHECK(cli("run --config " + (dir / "bad.json").string(), dir).code == 2);
  write(dir / "cfg.json", "{not json");
  CHECK(cli("run --config " + (dir / "cfg.json").string(), dir).code == 2);
  CHECK(cli("--help", dir).code == 0);
}

TEST_CASE("cli: evaluate prints the report") {
  TempDir dir("cli");
  write(dir / "gold.jsonl",
        R"({"id":"1","lang":"en","text":"Great tea but terrible service.","tuples":[{"aspect":"tea","polarity":"positive"},{"aspect":"service","polarity":"negative"}],"origin":"gold"})"
        "\n");
  write(dir / "pred.jsonl",
        R"({"id":"1","lang":"en","text":"Great tea but terrible service.","tuples":[{"aspect":"tea","polarity":"positive"},{"aspect":"service","polarity":"positive"}],"origin":"predicted"})"
        "\n");
  const auto r = cli("evaluate --gold " + (dir / "gold.jsonl").string() + " --pred " +
                     (dir / "pred.jsonl").string(), dir);
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["tp"] == 1);
  CHECK(j["fp"] == 1);
  CHECK(j["fn"] == 1);
  CHECK(j["f1"].get<double>() == doctest::Approx(0.5));
  CHECK(j["match_mode"] == "string");

  const auto e = cli("errors --gold " + (dir / "gold.jsonl").string() + " --pred " +
                     (dir / "pred.jsonl").string(), dir);
  REQUIRE(e.code == 0);
  CHECK(nlohmann::json::parse(e.out)["polarity"] == 1);
}

TEST_CASE("cli: bad data exits 4") {
  TempDir dir("cli");
  write(dir / "gold.jsonl", R"({"id":"1","lang":"en","text":"x","tuples":[],"origin":"gold"})" "\n");
  write(dir / "pred.jsonl", R"({"id":"2","lang":"en","text":"x","tuples":[],"origin":"gold"})" "\n");
  CHECK(cli("evaluate --gold " + (dir / "gold.jsonl").string() + " --pred " +
            (dir / "pred.jsonl").string(), dir).code == 4);
  write(dir / "broken.jsonl", "{\"id\": 1}\n");
  CHECK(cli("stats --input " + (dir / "broken.jsonl").string(), dir).code == 4);
  write(dir / "broken.xml", "<Reviews><Review>");
  CHECK(cli("ingest --lang en --input " + (dir / "broken.xml").string() + " --output " +
            (dir / "o.jsonl").string(), dir).code == 4);
}

TEST_CASE("cli: ingest the fixture") {
  TempDir dir("cli");
  const auto r = cli("ingest --lang en --input " LACA_TEST_DATA_DIR "/semeval_fixture.xml --output " +
                     (dir / "out.jsonl").string(), dir);
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["null_targets"] == 1);
  CHECK(j["stats"]["n_sentences"] == 3);
  CHECK(read_jsonl(dir / "out.jsonl", JsonlOptions{true}).size() == 3);
}

TEST_CASE("cli: run, then resume as a no-op") {
  TempDir dir("cli");
  const auto config = laca::testing::write_synthetic_run(dir.path() / "run", {});
  auto r = cli("run --config " + config.string() + " --stop-after predict", dir);
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["stages"].size() == 2);
  r = cli("run --resume --config " + config.string(), dir);
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["stages"].size() == 9);
  CHECK(fs::exists(dir.path() / "run" / "work" / "eval.json"));
  CHECK(cli("run --config " + config.string() + " --stop-after nowhere", dir).code == 2);
}
