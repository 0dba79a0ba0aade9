#include "laca/promptgen.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "laca/errors.hpp"
#include "laca/genformat.hpp"
#include "laca/hash.hpp"
#include "prompt_assets.hpp"

namespace laca {

DemoSample sample_demonstrations(const LabeledDataset& source, std::size_t k, Rng& rng) {
  if (k == 0) throw ConfigInvalid("k_shot must be >= 1");
  std::vector<const LabeledExample*> eligible;
  for (const auto& ex : source) {
    if (!ex.tuples.empty()) eligible.push_back(&ex);
  }
  DemoSample sample;
  if (eligible.size() < k) {
    spdlog::warn("only {} source examples carry labels, fewer than the {} demonstrations requested",
                 eligible.size(), k);
    sample.fell_back = true;
  }
  for (std::size_t i : rng.sample_indices(eligible.size(), k)) {
    sample.demos.push_back({serialize_tuples(eligible[i]->tuples), eligible[i]->text});
  }
  return sample;
}

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  for (std::string_view placeholder : {"{TARGET_LANGUAGE}", "{DEMONSTRATIONS}", "{TARGET_INPUT}"}) {
    if (text_.find(placeholder) == std::string::npos) {
      throw ConfigInvalid("prompt template lacks the " + std::string(placeholder) + " placeholder");
    }
  }
}

const PromptTemplate& PromptTemplate::builtin() {
  static const PromptTemplate tmpl{std::string(assets::kGenerateV1)};
  return tmpl;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  try {
    return PromptTemplate(read_file(path));
  } catch (const DataError& e) {
    throw ConfigInvalid(e.what());
  }
}

std::string PromptTemplate::render(std::string_view language, std::string_view demonstrations,
                                   std::string_view target_input) const {
  // Single left-to-right pass so substituted text is never rescanned.
  std::string out;
  out.reserve(text_.size() + demonstrations.size() + target_input.size());
  std::size_t i = 0;
  while (i < text_.size()) {
    if (text_[i] == '{') {
      auto try_sub = [&](std::string_view name, std::string_view value) {
        if (text_.compare(i, name.size(), name) != 0) return false;
        out += value;
        i += name.size();
        return true;
      };
      if (try_sub("{TARGET_LANGUAGE}", language) || try_sub("{DEMONSTRATIONS}", demonstrations) ||
          try_sub("{TARGET_INPUT}", target_input)) {
        continue;
      }
    }
    out += text_[i++];
  }
  return out;
}

std::string build_generation_prompt(const TupleSet& label, const LanguageCode& lang,
                                    std::span<const Demonstration> demos,
                                    const PromptTemplate& tmpl) {
  const std::string target = "Input: " + serialize_tuples(label) + "\nOutput:";
  std::string rendered_demos;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    if (i > 0) rendered_demos += "\n\n";
    rendered_demos += "Input: " + demos[i].label_rendering + "\nOutput: " + demos[i].text;
  }
  return tmpl.render(lang.english_name(), rendered_demos, target);
}

void RebalanceConfig::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(select_ratio) || !in_unit(neutral_prob) || !in_unit(negative_prob)) {
    throw ConfigInvalid("rebalance ratios must lie in [0, 1]");
  }
  if (std::abs(neutral_prob + negative_prob - 1.0) > 1e-9) {
    throw ConfigInvalid("rebalance neutral_prob + negative_prob must equal 1");
  }
}

std::vector<RebalancedLabel> rebalance(std::span<const TupleSet> labels,
                                       const RebalanceConfig& config, Rng& rng) {
  config.validate();
  std::vector<std::size_t> positive;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::any_of(labels[i].begin(), labels[i].end(),
                    [](const SentimentTuple& t) { return t.polarity == Polarity::Positive; })) {
      positive.push_back(i);
    }
  }
  // The epsilon keeps products such as 0.29 * 100 from flooring one short.
  const auto n_select = static_cast<std::size_t>(
      std::floor(config.select_ratio * static_cast<double>(positive.size()) + 1e-9));
  auto picks = rng.sample_indices(positive.size(), n_select);
  std::sort(picks.begin(), picks.end());

  std::vector<RebalancedLabel> out;
  out.reserve(picks.size());
  for (std::size_t pick : picks) {
    const auto source_index = positive[pick];
    TupleSet relabeled;
    for (auto t : labels[source_index]) {
      if (t.polarity == Polarity::Positive) {
        t.polarity = rng.bernoulli(config.neutral_prob) ? Polarity::Neutral : Polarity::Negative;
      }
      relabeled.insert(std::move(t));
    }
    out.push_back({source_index, std::move(relabeled)});
  }
  return out;
}

std::uint64_t job_seed(std::uint64_t run_seed, std::uint64_t job_index) {
  return mix_seed(run_seed, job_index);
}

GenerationJob make_generation_job(const JobSpec& spec, const LanguageCode& target_lang,
                                  const LabeledDataset& source_train, std::size_t shots,
                                  std::uint64_t run_seed, const SamplingParams& sampling,
                                  const PromptTemplate& tmpl) {
  GenerationJob job;
  job.id = spec.id;
  job.label = spec.label;
  job.lang = target_lang;
  job.sampling = sampling;
  job.seed = job_seed(run_seed, spec.job_index);
  Rng rng(job.seed);
  const auto sample = sample_demonstrations(source_train, shots, rng);
  job.prompt = build_generation_prompt(spec.label, target_lang, sample.demos, tmpl);
  return job;
}

}  // namespace laca
