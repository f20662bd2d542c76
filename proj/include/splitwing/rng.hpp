#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace splitwing {

// Deterministic splittable PRNG. Streams are forked by label from a stream's
// seed (not its position), so draw order in one stream never disturbs another.
// The generator and every derived distribution live here rather than in
// <random> so that results are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

  uint64_t next_u64();

  // Uniform in [0,1) with 53 significant bits.
  double next_double();
  double uniform(double lo, double hi);

  // Uniform in {0,...,bound-1}; bound > 0. Unbiased (rejection sampling).
  uint64_t below(uint64_t bound);

  // Independent stream derived from (seed, label, a, b).
  Rng fork(std::string_view label, uint64_t a = 0, uint64_t b = 0) const;

  // Fisher-Yates with this stream (std::shuffle's draw pattern is
  // implementation-defined, so it is not used).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t seed_;
  uint64_t state_;
};

}  // namespace splitwing
