#pragma once

// Two-stage cross-lingual run: train on the source language, label the target
// corpus, generate and filter pseudo-labelled target sentences, retrain on the
// merged data and evaluate. Each stage writes its artifacts under work_dir and
// is recorded in manifest.json, so an interrupted run can be resumed.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "laca/backend.hpp"
#include "laca/job.hpp"
#include "laca/promptgen.hpp"
#include "laca/random.hpp"
#include "laca/types.hpp"

namespace laca {

enum class RunMode { Laca, SelfTraining, ZeroShot };

std::string_view to_string(RunMode mode);
std::optional<RunMode> parse_run_mode(std::string_view word);

struct MockBackendSettings {
  /// JSON object mapping terms to polarities, known to every mock model.
  std::optional<std::filesystem::path> lexicon;
  double drop_aspect_rate = 0.0;
  double extra_term_rate = 0.0;
  double generate_fail_rate = 0.0;
};

struct BackendSettings {
  /// "http" or "mock".
  std::string kind = "mock";
  std::string absa_url;
  std::string llm_url;
  double timeout_s = 60.0;
  int max_retries = 3;
  int max_in_flight = 4;
  std::optional<std::string> auth_token;
  double backoff_base_s = 1.0;
  std::size_t batch_size = 32;
  MockBackendSettings mock;

  BackendConfig absa_config() const;
  BackendConfig llm_config() const;
};

struct RunConfig {
  LanguageCode source_lang = LanguageCode::parse("en");
  LanguageCode target_lang = LanguageCode::parse("es");
  std::filesystem::path source_train;
  std::filesystem::path source_dev;
  std::filesystem::path target_unlabelled;
  std::optional<std::filesystem::path> target_test;
  std::filesystem::path work_dir;
  std::string absa_backbone = "xlm-roberta-base";
  /// Model used by the standalone predict/filter commands.
  std::string absa_model = "base";
  /// Passed through to /v1/train untouched.
  nlohmann::json hyperparams = nlohmann::json::object();
  std::size_t k_shot = kDefaultShots;
  RebalanceConfig rebalance;
  SamplingParams sampling;
  std::uint64_t seed = 42;
  std::vector<std::uint64_t> seeds = {42};
  RunMode mode = RunMode::Laca;
  /// Upper bound on pseudo-labelled target examples fed to training.
  std::optional<std::size_t> max_generated;
  std::optional<std::filesystem::path> prompt_template;
  BackendSettings backend;

  /// SHA-256 of the config JSON with sorted keys.
  std::string hash;
  /// File the config was loaded from, if any.
  std::filesystem::path path;

  /// Throws ConfigInvalid.
  void validate() const;
};

/// Relative paths resolve against `base_dir`. Throws ConfigInvalid.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

struct OutputRecord {
  /// Relative to work_dir.
  std::string path;
  std::string sha256;
};

struct StageRecord {
  std::string name;
  std::map<std::string, std::string> inputs;
  std::vector<OutputRecord> outputs;
  double wall_time_s = 0.0;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  /// Not persisted: true when this invocation skipped the stage.
  bool skipped = false;
};

struct RunManifest {
  std::string config_hash;
  std::filesystem::path config_path;
  RunMode mode = RunMode::Laca;
  /// Append-only; a re-run stage adds a newer record under the same name.
  std::vector<StageRecord> stages;

  const StageRecord* latest(std::string_view name) const;
  /// Latest record per stage, in first-execution order.
  std::vector<const StageRecord*> effective() const;
};

nlohmann::ordered_json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
RunManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const RunManifest& m, const std::filesystem::path& path);

inline constexpr const char* kManifestFile = "manifest.json";

/// Stage names in execution order.
const std::vector<std::string>& stage_order();
/// Stages a mode executes.
std::vector<std::string> stages_for(RunMode mode);

struct RunOptions {
  /// Skip stages whose recorded inputs and outputs are unchanged.
  bool resume = false;
  /// Stop cleanly once this stage has completed.
  std::optional<std::string> stop_after;
  /// Called before a stage executes (not when it is skipped).
  std::function<void(const std::string& stage)> before_stage;
  /// Replace the transports built from the config.
  std::shared_ptr<Transport> absa_transport;
  std::shared_ptr<Transport> llm_transport;
};

/// Throws StageFailure (manifest saved up to the failing stage) or
/// ConfigInvalid.
RunManifest run_pipeline(const RunConfig& config, const RunOptions& options = {});

/// Re-runs from an existing manifest. Throws ConfigDrift when the config
/// changed since the manifest was written.
RunManifest resume(const RunConfig& config, RunOptions options = {});
RunManifest resume(const std::filesystem::path& manifest_path, RunOptions options = {});

/// Uniform sample without replacement of min(n, size) examples, kept in
/// input order.
LabeledDataset cap_generated(const LabeledDataset& dataset, std::size_t n, Rng& rng);

/// Concatenates both sets with ids prefixed "src:" and "tgt:" and shuffles
/// the result with `seed`.
LabeledDataset merge_datasets(const LabeledDataset& source, const LabeledDataset& generated,
                              std::uint64_t seed);

/// Transport pair for a config: the mock service (persisting trained models
/// under work_dir/mock_models) or HTTP clients for the configured URLs.
struct Backends {
  std::unique_ptr<BackendClient> absa;
  std::unique_ptr<BackendClient> llm;
};
Backends make_backends(const RunConfig& config, std::shared_ptr<Transport> absa_override = nullptr,
                       std::shared_ptr<Transport> llm_override = nullptr);

/// Builds one generation job per label with the config's prompt settings.
std::vector<GenerationJob> make_generation_jobs(const RunConfig& config,
                                                const LabeledDataset& labels,
                                                const LabeledDataset& source_train);

}  // namespace laca
