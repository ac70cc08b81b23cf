#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace refertok {

// Deterministic random source used for every seeded quantity in the library
// (stub-encoder projections, weight initialisation, k-means centroid picks).
//
// The generator is std::mt19937_64, which the standard pins bit-for-bit, and
// floats are produced directly from the raw 64-bit stream instead of going
// through std::uniform_real_distribution (whose algorithm is
// implementation-defined).
// Every derived value is therefore reproducible across platforms.
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1): top 53 bits of the raw draw.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform double in [-1, 1).
  double next_signed() { return 2.0 * next_double() - 1.0; }

  // Uniform integer in [0, bound). Plain modulo: the tiny bias is irrelevant
  // here and the rule stays trivial to restate in a reference implementation.
  std::uint64_t next_below(std::uint64_t bound) { return engine_() % bound; }

  // Partial Fisher-Yates: the first `take` entries of a shuffled
  // [0, count) index vector. Draw t uses next_below(count - t).
  std::vector<std::size_t> sample_indices(std::size_t count, std::size_t take) {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    for (std::size_t t = 0; t < take && t + 1 < count; ++t) {
      std::size_t j = t + static_cast<std::size_t>(next_below(count - t));
      std::swap(idx[t], idx[j]);
    }
    idx.resize(take);
    return idx;
  }

 private:
  std::mt19937_64 engine_;
};

// FNV-1a over the label, folded into the base seed with one splitmix64 step.
// Gives each named sub-stream (projection weights, per-job k-means, ...) an
// independent deterministic seed.
inline std::uint64_t seed_mix(std::uint64_t base, std::string_view label,
                              std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = base ^ h ^ (index * 0x9e3779b97f4a7c15ull);
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace refertok
