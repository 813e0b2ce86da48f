#include "mtseq/vocab.h"

#include <algorithm>

#include "mtseq/error.h"

namespace mtseq {

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Vocabulary::Vocabulary() {
  tokens_ = {kBosToken, kEosToken, kUnkToken, kPadToken};
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<std::int32_t>(i));
  }
}

std::int32_t Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const std::int32_t id = static_cast<std::int32_t>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

std::int32_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range (size " +
                     std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> Vocabulary::encode(std::span<const std::string> words) const {
  std::vector<std::int32_t> ids;
  ids.reserve(words.size());
  for (const std::string& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const std::int32_t> ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (std::int32_t i : ids) words.push_back(token(i));
  return words;
}

std::uint64_t Vocabulary::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const std::string& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64("\x1f", h);
  }
  return h;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  if (tokens.size() < 4 || tokens[0] != kBosToken || tokens[1] != kEosToken ||
      tokens[2] != kUnkToken || tokens[3] != kPadToken) {
    throw ConfigError("vocabulary token list does not start with the reserved entries");
  }
  for (std::size_t i = 4; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

Vocabulary build_vocab(const std::map<std::string, std::uint64_t>& counts, std::size_t max_size) {
  if (max_size <= 4) {
    throw ConfigError("vocabulary max_size must exceed the 4 reserved entries");
  }
  if (counts.empty()) {
    throw ConfigError("cannot build a vocabulary from an empty token stream");
  }
  std::vector<std::pair<std::string, std::uint64_t>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  const std::size_t budget = max_size - 4;
  for (const auto& [token, count] : items) {
    if (v.size() - 4 >= budget) break;
    if (token == Vocabulary::kBosToken || token == Vocabulary::kEosToken ||
        token == Vocabulary::kUnkToken || token == Vocabulary::kPadToken) {
      continue;
    }
    v.add(token);
  }
  return v;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences,
                       std::size_t max_size) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& sentence : sentences) {
    for (const std::string& w : sentence) ++counts[w];
  }
  return build_vocab(counts, max_size);
}

}  // namespace mtseq
