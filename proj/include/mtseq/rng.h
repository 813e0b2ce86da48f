#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mtseq {

// Seeded generator with a fully specified draw discipline: every variate is
// derived from raw mt19937_64 output by fixed arithmetic, never through
// std::*_distribution, so a (seed, call sequence) pair always reproduces the
// same stream and the engine state round-trips through text serialization.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Bernoulli(p).
  bool flip(double p) { return next_unit() < p; }

  // Index drawn with probability weights[i] / sum(weights).
  std::size_t categorical(std::span<const double> weights);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

// Stable 64-bit stream/key derivation (FNV-1a based).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace mtseq
