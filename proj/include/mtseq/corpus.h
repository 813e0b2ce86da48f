#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtseq/parse_tree.h"
#include "mtseq/tensor.h"
#include "mtseq/vocab.h"

namespace mtseq {

// One training pair before numberization. Caption-like tasks carry a real
// feature vector instead of source tokens.
struct TokenPair {
  std::vector<std::string> source;
  std::vector<std::string> target;
  std::vector<double> feature;

  bool has_feature() const { return !feature.empty(); }
};

struct ExamplePair {
  std::vector<std::int32_t> source;
  std::vector<std::int32_t> target;
  std::vector<double> feature;

  bool has_feature() const { return !feature.empty(); }
};

// Small integer matrix for padded id batches.
struct IdMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> v;

  IdMatrix() = default;
  IdMatrix(std::size_t r, std::size_t c, std::int32_t fill_value)
      : rows(r), cols(c), v(r * c, fill_value) {}
  std::int32_t& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  std::int32_t at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
  std::vector<std::int32_t> column(std::size_t c) const;
  bool operator==(const IdMatrix&) const = default;
};

struct Batch {
  IdMatrix source;                       // [B,S] reversed, right-padded with <pad>
  std::vector<std::int32_t> source_lengths;
  std::vector<std::vector<std::uint8_t>> source_step_mask;  // [S][B], 1 = real token
  Tensor source_features;                // [B,F] for feature-vector tasks (source empty)
  IdMatrix target_in;                    // [B,T]: <s> y1 .. ym, padded
  IdMatrix target_out;                   // [B,T]: y1 .. ym </s>, padded
  std::vector<std::vector<std::uint8_t>> target_mask;  // [T][B], 1 = scored position
  bool source_reversed = false;

  std::size_t size() const { return source.rows > 0 ? source.rows : source_features.rows(); }
  std::size_t token_count() const;
  bool is_feature_batch() const { return source_features.numel() > 0; }
};

TokenPair make_autoencoder(std::span<const std::string> sentence);

// First ceil(n/2) tokens predict the rest; returns nullopt for sentences
// shorter than 2 tokens.
std::optional<TokenPair> make_skipthought(std::span<const std::string> sentence);

std::vector<TokenPair> make_autoencoder_corpus(const std::vector<std::vector<std::string>>& sentences);
std::vector<TokenPair> make_skipthought_corpus(const std::vector<std::vector<std::string>>& sentences,
                                               std::uint64_t* skipped = nullptr);

ExamplePair numberize(const TokenPair& pair, const Vocabulary& source_vocab,
                      const Vocabulary& target_vocab);

// Assembles one padded batch in the given order.
Batch assemble_batch(std::span<const ExamplePair> pairs);

// One epoch of batches; order shuffled under the rng unless shuffle is false.
std::vector<Batch> make_batches(std::span<const ExamplePair> pairs, std::size_t batch_size,
                                Rng& rng, bool shuffle = true);

// Endless epoch-wrapping batch source with fully serializable position.
class BatchStream {
 public:
  BatchStream(std::vector<ExamplePair> pairs, std::size_t batch_size, std::uint64_t seed);

  Batch next();

  std::uint64_t epochs_completed() const { return epochs_completed_; }
  std::size_t batches_per_epoch() const;
  std::size_t pair_count() const { return pairs_.size(); }

  struct State {
    std::string rng;
    std::vector<std::uint32_t> order;
    std::uint64_t cursor = 0;
    std::uint64_t epochs_completed = 0;
  };
  State save_state() const;
  void restore_state(const State& state);

 private:
  void reshuffle();

  std::vector<ExamplePair> pairs_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::uint32_t> order_;
  std::uint64_t cursor_ = 0;  // next pair index into order_
  std::uint64_t epochs_completed_ = 0;
};

enum class SynthKind { kCopy, kReverse, kSubstituteReverse, kToyParse };

SynthKind synth_kind_from_string(const std::string& name);
std::string to_string(SynthKind kind);

struct SynthSpec {
  SynthKind kind = SynthKind::kCopy;
  std::size_t size = 0;
  std::size_t vocab_tokens = 8;  // alphabet size; tokens are "0".."n-1"
  std::size_t min_len = 1;
  std::size_t max_len = 8;
  std::uint64_t seed = 0;
};

// Deterministic toy corpora. substitute-reverse maps each token through a
// fixed bijective shift and reverses the sentence; toy-parse targets are
// linearized binary trees whose shape and labels are a deterministic
// function of the source tokens.
std::vector<TokenPair> synth_corpus(const SynthSpec& spec);

// The tree the toy-parse generator assigns to a sentence.
ParseTree toy_parse_tree(std::span<const std::string> tokens);

// One sentence per line, whitespace tokenized.
std::vector<std::vector<std::string>> read_token_lines(const std::string& path);
// One whitespace-separated real vector per line.
std::vector<std::vector<double>> read_vector_lines(const std::string& path);
// One bracketed tree per line.
std::vector<ParseTree> read_tree_lines(const std::string& path);

}  // namespace mtseq
