#pragma once

// Generation prompts: instruction, rotated few-shot demonstrations drawn from
// the source training split, and the target label. Also produces the extra
// sentiment-rebalanced labels.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "laca/job.hpp"
#include "laca/random.hpp"
#include "laca/types.hpp"

namespace laca {

inline constexpr std::size_t kDefaultShots = 10;

struct Demonstration {
  std::string label_rendering;
  std::string text;

  bool operator==(const Demonstration&) const = default;
};

struct DemoSample {
  std::vector<Demonstration> demos;
  /// Fewer than k eligible examples existed, so all of them were used.
  bool fell_back = false;
};

/// Draws k distinct examples with non-empty labels uniformly without
/// replacement, in draw order.
DemoSample sample_demonstrations(const LabeledDataset& source, std::size_t k, Rng& rng);

/// Template text with {TARGET_LANGUAGE}, {DEMONSTRATIONS} and {TARGET_INPUT}
/// placeholders.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text);

  /// The versioned template shipped with the toolkit.
  static const PromptTemplate& builtin();
  static PromptTemplate load(const std::filesystem::path& path);

  const std::string& text() const { return text_; }
  std::string render(std::string_view language, std::string_view demonstrations,
                     std::string_view target_input) const;

 private:
  std::string text_;
};

inline constexpr std::string_view kBuiltinTemplateVersion = "generate_v1";

/// Demonstrations render as "Input: <label>\nOutput: <text>" blocks separated
/// by a blank line, and the prompt ends with "Input: <label>\nOutput:".
/// Throws EmptyTupleList for an empty label.
std::string build_generation_prompt(const TupleSet& label, const LanguageCode& lang,
                                    std::span<const Demonstration> demos,
                                    const PromptTemplate& tmpl = PromptTemplate::builtin());

struct RebalanceConfig {
  double select_ratio = 0.20;
  double neutral_prob = 0.60;
  double negative_prob = 0.40;

  /// Throws ConfigInvalid.
  void validate() const;
};

struct RebalancedLabel {
  /// Index of the label it was derived from.
  std::size_t source_index;
  TupleSet label;
};

/// Picks floor(select_ratio * m) of the m labels holding a positive tuple and
/// returns a copy of each with every positive tuple independently flipped to
/// neutral or negative. Aspects and non-positive tuples are untouched.
/// Output is ordered by source_index.
std::vector<RebalancedLabel> rebalance(std::span<const TupleSet> labels,
                                       const RebalanceConfig& config, Rng& rng);

/// Seed of the RNG stream owned by job `job_index` of a run.
std::uint64_t job_seed(std::uint64_t run_seed, std::uint64_t job_index);

struct JobSpec {
  std::string id;
  TupleSet label;
  std::size_t job_index = 0;
};

/// Demonstrations come from the job's own stream, so a job renders the same
/// prompt regardless of which thread builds it or in what order.
GenerationJob make_generation_job(const JobSpec& spec, const LanguageCode& target_lang,
                                  const LabeledDataset& source_train, std::size_t shots,
                                  std::uint64_t run_seed, const SamplingParams& sampling,
                                  const PromptTemplate& tmpl = PromptTemplate::builtin());

}  // namespace laca
