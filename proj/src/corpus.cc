#include "mtseq/corpus.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mtseq/error.h"

namespace mtseq {

std::vector<std::int32_t> IdMatrix::column(std::size_t c) const {
  std::vector<std::int32_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
  return out;
}

std::size_t Batch::token_count() const {
  std::size_t n = 0;
  for (const auto& col : target_mask) {
    for (std::uint8_t m : col) n += m;
  }
  return n;
}

TokenPair make_autoencoder(std::span<const std::string> sentence) {
  if (sentence.empty()) {
    throw InputError("autoencoder pair requires a non-empty sentence");
  }
  TokenPair pair;
  pair.source.assign(sentence.begin(), sentence.end());
  pair.target = pair.source;
  return pair;
}

std::optional<TokenPair> make_skipthought(std::span<const std::string> sentence) {
  if (sentence.size() < 2) return std::nullopt;
  const std::size_t half = (sentence.size() + 1) / 2;  // ceil(n/2)
  TokenPair pair;
  pair.source.assign(sentence.begin(), sentence.begin() + half);
  pair.target.assign(sentence.begin() + half, sentence.end());
  return pair;
}

std::vector<TokenPair> make_autoencoder_corpus(
    const std::vector<std::vector<std::string>>& sentences) {
  std::vector<TokenPair> pairs;
  pairs.reserve(sentences.size());
  for (const auto& s : sentences) pairs.push_back(make_autoencoder(s));
  return pairs;
}

std::vector<TokenPair> make_skipthought_corpus(
    const std::vector<std::vector<std::string>>& sentences, std::uint64_t* skipped) {
  std::vector<TokenPair> pairs;
  pairs.reserve(sentences.size());
  std::uint64_t dropped = 0;
  for (const auto& s : sentences) {
    if (auto pair = make_skipthought(s)) {
      pairs.push_back(std::move(*pair));
    } else {
      ++dropped;
    }
  }
  if (skipped != nullptr) *skipped += dropped;
  return pairs;
}

ExamplePair numberize(const TokenPair& pair, const Vocabulary& source_vocab,
                      const Vocabulary& target_vocab) {
  if (pair.target.empty()) {
    throw InputError("example pair requires a non-empty target");
  }
  ExamplePair out;
  if (pair.has_feature()) {
    out.feature = pair.feature;
  } else {
    out.source = source_vocab.encode(pair.source);
  }
  out.target = target_vocab.encode(pair.target);
  return out;
}

Batch assemble_batch(std::span<const ExamplePair> pairs) {
  if (pairs.empty()) throw InputError("cannot assemble an empty batch");
  const std::size_t batch = pairs.size();
  const bool feature_batch = pairs[0].has_feature();

  Batch out;
  if (feature_batch) {
    const std::size_t dim = pairs[0].feature.size();
    out.source_features = Tensor({batch, dim});
    for (std::size_t b = 0; b < batch; ++b) {
      if (pairs[b].feature.size() != dim) {
        throw DimensionError("feature vectors in one batch must share a dimension");
      }
      for (std::size_t k = 0; k < dim; ++k) {
        out.source_features.at(b, k) = static_cast<Real>(pairs[b].feature[k]);
      }
    }
  } else {
    std::size_t max_src = 0;
    for (const ExamplePair& p : pairs) max_src = std::max(max_src, p.source.size());
    out.source = IdMatrix(batch, max_src, Vocabulary::kPad);
    out.source_lengths.resize(batch);
    out.source_step_mask.assign(max_src, std::vector<std::uint8_t>(batch, 0));
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& src = pairs[b].source;
      out.source_lengths[b] = static_cast<std::int32_t>(src.size());
      for (std::size_t t = 0; t < src.size(); ++t) {
        out.source.at(b, t) = src[src.size() - 1 - t];  // reversal
        out.source_step_mask[t][b] = 1;
      }
    }
    out.source_reversed = true;
  }

  std::size_t max_tgt = 0;
  for (const ExamplePair& p : pairs) {
    if (p.target.empty()) throw InputError("cannot batch a pair with an empty target");
    max_tgt = std::max(max_tgt, p.target.size());
  }
  const std::size_t tgt_cols = max_tgt + 1;  // room for <s> / </s>
  out.target_in = IdMatrix(batch, tgt_cols, Vocabulary::kPad);
  out.target_out = IdMatrix(batch, tgt_cols, Vocabulary::kPad);
  out.target_mask.assign(tgt_cols, std::vector<std::uint8_t>(batch, 0));
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& tgt = pairs[b].target;
    out.target_in.at(b, 0) = Vocabulary::kBos;
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      out.target_in.at(b, t + 1) = tgt[t];
      out.target_out.at(b, t) = tgt[t];
      out.target_mask[t][b] = 1;
    }
    out.target_out.at(b, tgt.size()) = Vocabulary::kEos;
    out.target_mask[tgt.size()][b] = 1;
  }
  return out;
}

std::vector<Batch> make_batches(std::span<const ExamplePair> pairs, std::size_t batch_size,
                                Rng& rng, bool shuffle) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::uint32_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
  if (shuffle) rng.shuffle(order);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    std::vector<ExamplePair> chunk;
    chunk.reserve(count);
    for (std::size_t i = 0; i < count; ++i) chunk.push_back(pairs[order[start + i]]);
    batches.push_back(assemble_batch(chunk));
  }
  return batches;
}

BatchStream::BatchStream(std::vector<ExamplePair> pairs, std::size_t batch_size,
                         std::uint64_t seed)
    : pairs_(std::move(pairs)), batch_size_(batch_size), rng_(seed) {
  if (pairs_.empty()) throw ConfigError("batch stream requires a non-empty corpus");
  if (batch_size_ < 1) throw ConfigError("batch_size must be >= 1");
  reshuffle();
}

std::size_t BatchStream::batches_per_epoch() const {
  return (pairs_.size() + batch_size_ - 1) / batch_size_;
}

void BatchStream::reshuffle() {
  order_.resize(pairs_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
  rng_.shuffle(order_);
  cursor_ = 0;
}

Batch BatchStream::next() {
  if (cursor_ >= order_.size()) {
    ++epochs_completed_;
    reshuffle();
  }
  const std::size_t count = std::min<std::size_t>(batch_size_, order_.size() - cursor_);
  std::vector<ExamplePair> chunk;
  chunk.reserve(count);
  for (std::size_t i = 0; i < count; ++i) chunk.push_back(pairs_[order_[cursor_ + i]]);
  cursor_ += count;
  return assemble_batch(chunk);
}

BatchStream::State BatchStream::save_state() const {
  State s;
  s.rng = rng_.serialize();
  s.order = order_;
  s.cursor = cursor_;
  s.epochs_completed = epochs_completed_;
  return s;
}

void BatchStream::restore_state(const State& state) {
  if (state.order.size() != pairs_.size()) {
    throw ConfigError("batch stream state does not match corpus size");
  }
  rng_ = Rng::deserialize(state.rng);
  order_ = state.order;
  cursor_ = state.cursor;
  epochs_completed_ = state.epochs_completed;
}

SynthKind synth_kind_from_string(const std::string& name) {
  if (name == "copy") return SynthKind::kCopy;
  if (name == "reverse") return SynthKind::kReverse;
  if (name == "substitute-reverse") return SynthKind::kSubstituteReverse;
  if (name == "toy-parse") return SynthKind::kToyParse;
  throw ConfigError("unknown synthetic corpus kind: " + name);
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::kCopy: return "copy";
    case SynthKind::kReverse: return "reverse";
    case SynthKind::kSubstituteReverse: return "substitute-reverse";
    case SynthKind::kToyParse: return "toy-parse";
  }
  return "?";
}

namespace {

std::uint64_t hash_tokens(std::span<const std::string> tokens, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (const std::string& t : tokens) {
    h = fnv1a64(t, h);
    h = fnv1a64("\x1f", h);
  }
  return h;
}

ParseTree toy_parse_node(std::span<const std::string> tokens) {
  static const char* kInternal[] = {"S", "NP", "VP", "PP"};
  static const char* kPreterminal[] = {"TA", "TB", "TC", "TD"};
  ParseTree node;
  if (tokens.size() == 1) {
    node.label = kPreterminal[hash_tokens(tokens, 11) % 4];
    ParseTree leaf;
    leaf.word = tokens[0];
    node.children.push_back(std::move(leaf));
    return node;
  }
  node.label = kInternal[hash_tokens(tokens, 17) % 4];
  const std::size_t split = 1 + hash_tokens(tokens, 29) % (tokens.size() - 1);
  node.children.push_back(toy_parse_node(tokens.subspan(0, split)));
  node.children.push_back(toy_parse_node(tokens.subspan(split)));
  return node;
}

}  // namespace

ParseTree toy_parse_tree(std::span<const std::string> tokens) {
  if (tokens.empty()) throw InputError("toy parse tree requires a non-empty sentence");
  return toy_parse_node(tokens);
}

std::vector<TokenPair> synth_corpus(const SynthSpec& spec) {
  if (spec.size < 1) throw ConfigError("synthetic corpus size must be >= 1");
  if (spec.vocab_tokens < 1) throw ConfigError("synthetic alphabet must be non-empty");
  if (spec.min_len < 1 || spec.max_len < spec.min_len) {
    throw ConfigError("synthetic corpus length range is invalid");
  }
  Rng rng(spec.seed);
  const std::size_t n = spec.vocab_tokens;
  std::size_t shift = (n / 2 + 1) % n;
  if (shift == 0) shift = n > 1 ? 1 : 0;

  std::vector<TokenPair> pairs;
  pairs.reserve(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) {
    const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    TokenPair pair;
    pair.source.reserve(len);
    for (std::size_t t = 0; t < len; ++t) {
      pair.source.push_back(std::to_string(rng.below(n)));
    }
    switch (spec.kind) {
      case SynthKind::kCopy:
        pair.target = pair.source;
        break;
      case SynthKind::kReverse:
        pair.target.assign(pair.source.rbegin(), pair.source.rend());
        break;
      case SynthKind::kSubstituteReverse:
        pair.target.reserve(len);
        for (auto it = pair.source.rbegin(); it != pair.source.rend(); ++it) {
          const std::size_t tok = std::stoull(*it);
          pair.target.push_back(std::to_string((tok + shift) % n));
        }
        break;
      case SynthKind::kToyParse:
        pair.target = linearize(toy_parse_tree(pair.source));
        break;
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    if (!tokens.empty()) lines.push_back(std::move(tokens));
  }
  return lines;
}

std::vector<std::vector<double>> read_vector_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::vector<double> row;
    double x;
    while (ss >> x) row.push_back(x);
    if (!ss.eof() && ss.fail()) {
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed real vector");
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ParseTree> read_tree_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<ParseTree> trees;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool blank = true;
    for (char c : line) {
      if (!std::isspace(static_cast<unsigned char>(c))) {
        blank = false;
        break;
      }
    }
    if (blank) continue;
    try {
      trees.push_back(parse_bracketed(line));
    } catch (const TreeParseError& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return trees;
}

}  // namespace mtseq
