#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laca/types.hpp"

namespace laca {

/// Nucleus sampling settings sent with every generation request.
struct SamplingParams {
  double top_p = 0.8;
  double temperature = 0.8;
  int max_tokens = 128;

  /// Throws ConfigInvalid.
  void validate() const;
  bool operator==(const SamplingParams&) const = default;
};

/// Generation stops at the first blank line.
inline const std::vector<std::string> kDefaultStop = {"\n\n"};

struct GenerationJob {
  std::string id;
  TupleSet label;
  LanguageCode lang = LanguageCode::parse("en");
  std::string prompt;
  SamplingParams sampling;
  std::vector<std::string> stop = kDefaultStop;
  std::uint64_t seed = 0;
};

}  // namespace laca
