#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace laca {

/// SplitMix64 finalizer; combines a run seed with a stream index so every job
/// gets an independent stream no matter which thread renders it.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// mt19937_64 with portable derived distributions. The standard
/// distributions are implementation-defined, so draws go through our own
/// rejection sampling to stay identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01();
  bool bernoulli(double p) { return uniform01() < p; }

  /// k distinct indices from [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace laca
