#include "mtseq/rng.h"

#include <sstream>

#include "mtseq/error.h"

namespace mtseq {

std::size_t Rng::categorical(std::span<const double> weights) {
  if (weights.empty()) {
    throw ConfigError("categorical draw over empty weight list");
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) {
    throw ConfigError("categorical weights must have positive sum");
  }
  double u = next_unit() * total;
  double cum = 0.0;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    cum += weights[i];
    if (u < cum) return i;
  }
  return weights.size() - 1;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng r(0);
  std::istringstream is(text);
  is >> r.engine_;
  if (is.fail()) {
    throw IoError("malformed rng state text");
  }
  return r;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t h = 1469598103934665603ULL;
  auto absorb = [&h](std::uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  absorb(seed);
  absorb(stream);
  return h;
}

}  // namespace mtseq
