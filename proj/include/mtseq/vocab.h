#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mtseq {

// Token table with four reserved entries at fixed ids. Lookup is total:
// unknown tokens map to <unk>.
class Vocabulary {
 public:
  static constexpr std::int32_t kBos = 0;
  static constexpr std::int32_t kEos = 1;
  static constexpr std::int32_t kUnk = 2;
  static constexpr std::int32_t kPad = 3;
  static constexpr const char* kBosToken = "<s>";
  static constexpr const char* kEosToken = "</s>";
  static constexpr const char* kUnkToken = "<unk>";
  static constexpr const char* kPadToken = "<pad>";

  Vocabulary();

  // Appends a non-reserved token; returns its id (existing id if present).
  std::int32_t add(const std::string& token);

  std::int32_t id(const std::string& token) const;
  const std::string& token(std::int32_t id) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::int32_t> encode(std::span<const std::string> words) const;
  std::vector<std::string> decode(std::span<const std::int32_t> ids) const;

  std::uint64_t digest() const;

  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Reserved entries plus the (max_size - 4) most frequent tokens; frequency
// ties break lexicographically.
Vocabulary build_vocab(const std::map<std::string, std::uint64_t>& counts, std::size_t max_size);
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences,
                       std::size_t max_size);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace mtseq
