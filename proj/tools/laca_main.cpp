#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "laca/backend.hpp"
#include "laca/corpus.hpp"
#include "laca/errors.hpp"
#include "laca/eval.hpp"
#include "laca/filter.hpp"
#include "laca/hash.hpp"
#include "laca/mock.hpp"
#include "laca/pipeline.hpp"
#include "laca/text.hpp"

namespace fs = std::filesystem;
using namespace laca;

namespace {

RunConfig load_config(const fs::path& path, const std::string& prompt_template) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigInvalid("config '" + path.string() + "' is not valid JSON: " + e.what());
  } catch (const DataError& e) {
    throw ConfigInvalid(e.what());
  }
  if (!prompt_template.empty()) j["prompt_template"] = fs::absolute(prompt_template).string();
  auto config = parse_run_config(j, fs::absolute(path).parent_path());
  config.path = fs::absolute(path);
  return config;
}

void print(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << '\n'; }

LabeledDataset read_any(const fs::path& path) { return read_jsonl(path, JsonlOptions{true}); }

int serve_mock(const std::string& host, int port, const std::string& lexicon_path,
               const std::string& model_dir) {
  mock::MockServiceOptions opts;
  if (!lexicon_path.empty()) {
    opts.base_lexicon = mock::lexicon_from_json(nlohmann::json::parse(read_file(lexicon_path)));
  }
  opts.model_dir = model_dir;
  auto service = std::make_shared<mock::MockService>(std::move(opts));
  httplib::Server server;
  for (auto path : {kPredictPath, kGeneratePath, kTrainPath}) {
    server.Post(std::string(path), [service, path](const httplib::Request& req, httplib::Response& res) {
      const auto r = service->handle(std::string(path), req.body);
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
  }
  spdlog::info("mock backend listening on {}:{}", host, port);
  return server.listen(host, port) ? 0 : exit_code(ErrorKind::Config);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("laca"));

  CLI::App app{"Cross-lingual ABSA pseudo-labelling toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  std::string input, output, lang, config_path, preds, report, source, generated, gold, pred;
  std::string model, failures, prompt_template, stop_after, lexicon, model_dir, host = "127.0.0.1";
  bool allow_any_lang = false;
  bool resume_run = false;
  std::uint64_t seed = 0;
  int port = 8080;

  auto* ingest = app.add_subcommand("ingest", "Convert SemEval XML (or JSONL) to JSONL");
  ingest->add_option("--input", input)->required()->check(CLI::ExistingFile);
  ingest->add_option("--lang", lang)->required();
  ingest->add_option("--output", output)->required();
  ingest->add_flag("--allow-any-lang", allow_any_lang, "Accept any two-letter language code");

  auto* stats = app.add_subcommand("stats", "Sentence, aspect and polarity counts of a JSONL file");
  stats->add_option("--input", input)->required()->check(CLI::ExistingFile);

  auto* predict = app.add_subcommand("predict", "Label sentences with the ABSA backend");
  predict->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  predict->add_option("--input", input)->required()->check(CLI::ExistingFile);
  predict->add_option("--output", output)->required();
  predict->add_option("--model", model, "Overrides absa_model from the config");

  auto* generate = app.add_subcommand("generate", "Generate target sentences for predicted labels");
  generate->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  generate->add_option("--preds", preds)->required()->check(CLI::ExistingFile);
  generate->add_option("--output", output)->required();
  generate->add_option("--failures", failures, "Write failed jobs here");
  generate->add_option("--prompt-template", prompt_template)->check(CLI::ExistingFile);

  auto* filter = app.add_subcommand("filter", "Keep generated pairs that pass both quality checks");
  filter->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  filter->add_option("--input", input)->required()->check(CLI::ExistingFile);
  filter->add_option("--output", output)->required();
  filter->add_option("--report", report)->required();
  filter->add_option("--model", model, "Overrides absa_model from the config");

  auto* merge = app.add_subcommand("merge", "Concatenate and shuffle source and generated data");
  merge->add_option("--source", source)->required()->check(CLI::ExistingFile);
  merge->add_option("--generated", generated)->required()->check(CLI::ExistingFile);
  merge->add_option("--output", output)->required();
  merge->add_option("--seed", seed)->required();

  auto* evaluate = app.add_subcommand("evaluate", "Exact-match micro-F1");
  evaluate->add_option("--gold", gold)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--pred", pred)->required()->check(CLI::ExistingFile);

  auto* errors = app.add_subcommand("errors", "Boundary/missing/extra/polarity error counts");
  errors->add_option("--gold", gold)->required()->check(CLI::ExistingFile);
  errors->add_option("--pred", pred)->required()->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "Run the full pipeline");
  run->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  run->add_flag("--resume", resume_run, "Skip stages whose inputs and outputs are unchanged");
  run->add_option("--stop-after", stop_after, "Stop once this stage completes")
      ->check(CLI::IsMember(stage_order()));
  run->add_option("--prompt-template", prompt_template)->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve-mock", "Serve the mock backends over HTTP");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--lexicon", lexicon)->check(CLI::ExistingFile);
  serve->add_option("--model-dir", model_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::Config);
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::err : spdlog::level::info);

  try {
    if (*ingest) {
      const auto code = LanguageCode::parse(lang, allow_any_lang);
      nlohmann::ordered_json summary;
      LabeledDataset ds;
      if (fs::path(input).extension() == ".jsonl") {
        ds = read_jsonl(input, JsonlOptions{allow_any_lang});
      } else {
        auto parsed = parse_semeval_xml_file(input, code);
        summary["null_targets"] = parsed.null_targets;
        summary["skipped_sentences"] = parsed.skipped_sentences;
        for (const auto& issue : parsed.offset_issues) {
          spdlog::warn("sentence {}: offsets {}-{} do not cover '{}'", issue.sentence_id,
                       issue.span.from, issue.span.to, issue.target);
        }
        ds = std::move(parsed.dataset);
      }
      write_jsonl(ds, fs::path(output));
      summary["stats"] = stats_to_json(dataset_stats(ds));
      print(summary);
    } else if (*stats) {
      print(stats_to_json(dataset_stats(read_any(input))));
    } else if (*predict) {
      const auto config = load_config(config_path, "");
      auto backends = make_backends(config);
      const auto inputs = read_any(input);
      const auto& use_model = model.empty() ? config.absa_model : model;
      std::map<LanguageCode, LabeledDataset> by_lang;
      for (const auto& ex : inputs) by_lang[ex.lang].push_back(ex);
      std::map<std::string, TupleSet> labels;
      for (const auto& [l, batch] : by_lang) labels.merge(predict_batch(*backends.absa, use_model, l, batch));
      LabeledDataset out;
      for (const auto& ex : inputs) {
        out.push_back({ex.id, ex.lang, ex.text, labels.at(ex.id), Origin::Predicted});
      }
      write_jsonl(out, fs::path(output));
      print(stats_to_json(dataset_stats(out)));
    } else if (*generate) {
      const auto config = load_config(config_path, prompt_template);
      auto backends = make_backends(config);
      LabeledDataset labels;
      for (auto& ex : read_any(preds)) {
        if (!ex.tuples.empty()) labels.push_back(std::move(ex));
      }
      const auto source = read_jsonl(config.source_train);
      const auto jobs = make_generation_jobs(config, labels, source);
      const auto outcomes = generate_batch(*backends.llm, jobs);
      LabeledDataset out;
      std::vector<RejectionRecord> failed;
      for (const auto& job : jobs) {
        const auto& o = outcomes.at(job.id);
        if (const auto* f = std::get_if<GenerationFailed>(&o)) {
          failed.push_back({job.id, RejectionStage::GenerationFailed, {{"reason", f->reason}}});
        } else {
          out.push_back({job.id, job.lang, text::trim(std::get<std::string>(o)), job.label,
                         Origin::Generated});
        }
      }
      write_jsonl(out, fs::path(output));
      if (!failures.empty()) write_rejections(failed, failures);
      print({{"jobs", jobs.size()}, {"generated", out.size()}, {"failed", failed.size()}});
    } else if (*filter) {
      const auto config = load_config(config_path, "");
      auto backends = make_backends(config);
      RemotePredictor predictor(*backends.absa, model.empty() ? config.absa_model : model);
      const auto result = filter_generated(read_any(input), predictor);
      write_jsonl(result.kept, fs::path(output));
      write_rejections(result.rejected, report);
      print({{"kept", result.kept.size()}, {"rejected", result.rejected.size()}});
    } else if (*merge) {
      const auto merged = merge_datasets(read_any(source), read_any(generated), seed);
      write_jsonl(merged, fs::path(output));
      print(stats_to_json(dataset_stats(merged)));
    } else if (*evaluate) {
      print(report_to_json(micro_f1(read_any(gold), read_any(pred))));
    } else if (*errors) {
      print(taxonomy_to_json(classify_errors(read_any(gold), read_any(pred))));
    } else if (*run) {
      const auto config = load_config(config_path, prompt_template);
      RunOptions options;
      options.resume = resume_run;
      if (!stop_after.empty()) options.stop_after = stop_after;
      const auto manifest = run_pipeline(config, options);
      nlohmann::ordered_json summary;
      summary["work_dir"] = config.work_dir.string();
      summary["stages"] = nlohmann::ordered_json::array();
      for (const auto* s : manifest.effective()) summary["stages"].push_back(s->name);
      print(summary);
    } else if (*serve) {
      return serve_mock(host, port, lexicon, model_dir);
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code(ErrorKind::Data);
  }
  return 0;
}
