#include "mtseq/seq2seq.h"

#include <cmath>

#include "mtseq/error.h"
#include "mtseq/vocab.h"

namespace mtseq {

namespace {

struct SequenceEncoderCache : EncoderCache {
  StackCache stack;
  std::vector<std::vector<std::int32_t>> step_ids;  // [S][B]
};

struct FeatureEncoderCache : EncoderCache {
  Tensor features;  // [B,F]
};

void check_source_batch(const Batch& batch) {
  if (batch.is_feature_batch()) return;
  if (batch.source.cols == 0 || batch.source.rows == 0) {
    throw InputError("encode: empty source batch");
  }
  for (std::int32_t len : batch.source_lengths) {
    if (len < 1) throw InputError("encode: empty source sequence in batch");
  }
  if (!batch.source_reversed) {
    throw InputError("encode: source batch was not reversed during batching");
  }
}

}  // namespace

SequenceEncoder::SequenceEncoder(std::string id, std::size_t vocab_size,
                                 std::size_t embedding_dim, std::size_t depth,
                                 std::size_t hidden_dim, double dropout_p)
    : Encoder(std::move(id), depth, hidden_dim),
      embed_(id_ + "/embed/table", vocab_size, embedding_dim),
      stack_(id_, depth, embedding_dim, hidden_dim, dropout_p) {}

EncoderState SequenceEncoder::encode(const Batch& batch, bool train_mode, Rng* rng,
                                     std::unique_ptr<EncoderCache>* cache_out) {
  check_source_batch(batch);
  if (batch.is_feature_batch()) {
    throw ConfigError("sequence encoder " + id_ + " cannot consume feature-vector batches");
  }
  const std::size_t steps = batch.source.cols;
  auto cache = cache_out != nullptr ? std::make_unique<SequenceEncoderCache>() : nullptr;

  std::vector<Tensor> inputs;
  inputs.reserve(steps);
  std::vector<std::vector<std::int32_t>> step_ids;
  step_ids.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<std::int32_t> ids = batch.source.column(t);
    inputs.push_back(embed_.lookup(ids));
    step_ids.push_back(std::move(ids));
  }

  RnnState init = RnnState::zeros(stack_.depth(), batch.source.rows, stack_.hidden_dim());
  EncoderState final_state;
  stack_.forward(inputs, init, train_mode, rng, &final_state,
                 cache != nullptr ? &cache->stack : nullptr, batch.source_step_mask);
  if (cache != nullptr) {
    cache->step_ids = std::move(step_ids);
    *cache_out = std::move(cache);
  }
  return final_state;
}

void SequenceEncoder::backward(EncoderCache& cache, const EncoderState& d_state) {
  auto& c = dynamic_cast<SequenceEncoderCache&>(cache);
  StackBackwardResult res = stack_.backward(c.stack, {}, &d_state);
  for (std::size_t t = 0; t < res.d_inputs.size(); ++t) {
    embed_.backward(c.step_ids[t], res.d_inputs[t]);
  }
}

std::vector<ParamPtr> SequenceEncoder::params() const {
  std::vector<ParamPtr> out{embed_.table()};
  for (const ParamPtr& p : stack_.params()) out.push_back(p);
  return out;
}

FeatureEncoder::FeatureEncoder(std::string id, std::size_t feature_dim, std::size_t depth,
                               std::size_t hidden_dim)
    : Encoder(std::move(id), depth, hidden_dim), feature_dim_(feature_dim) {
  for (std::size_t l = 0; l < depth; ++l) {
    const std::string prefix = id_ + "/layer" + std::to_string(l);
    w_h_.push_back(std::make_shared<Parameter>(prefix + "/proj_h/W",
                                               std::vector<std::size_t>{hidden_dim, feature_dim}));
    b_h_.push_back(std::make_shared<Parameter>(prefix + "/proj_h/b",
                                               std::vector<std::size_t>{hidden_dim}));
    w_c_.push_back(std::make_shared<Parameter>(prefix + "/proj_c/W",
                                               std::vector<std::size_t>{hidden_dim, feature_dim}));
    b_c_.push_back(std::make_shared<Parameter>(prefix + "/proj_c/b",
                                               std::vector<std::size_t>{hidden_dim}));
  }
}

EncoderState FeatureEncoder::encode(const Batch& batch, bool /*train_mode*/, Rng* /*rng*/,
                                    std::unique_ptr<EncoderCache>* cache_out) {
  if (!batch.is_feature_batch()) {
    throw ConfigError("feature encoder " + id_ + " requires feature-vector batches");
  }
  if (batch.source_features.cols() != feature_dim_) {
    throw DimensionError("feature encoder " + id_ + " expects dim " +
                         std::to_string(feature_dim_) + ", got " +
                         shape_string(batch.source_features));
  }
  EncoderState state;
  state.h.reserve(depth_);
  state.c.reserve(depth_);
  for (std::size_t l = 0; l < depth_; ++l) {
    state.h.push_back(affine(batch.source_features, w_h_[l]->value, b_h_[l]->value));
    state.c.push_back(affine(batch.source_features, w_c_[l]->value, b_c_[l]->value));
  }
  if (cache_out != nullptr) {
    auto cache = std::make_unique<FeatureEncoderCache>();
    cache->features = batch.source_features;
    *cache_out = std::move(cache);
  }
  return state;
}

void FeatureEncoder::backward(EncoderCache& cache, const EncoderState& d_state) {
  auto& c = dynamic_cast<FeatureEncoderCache&>(cache);
  for (std::size_t l = 0; l < depth_; ++l) {
    affine_backward(c.features, w_h_[l]->value, d_state.h[l], nullptr, &w_h_[l]->grad,
                    &b_h_[l]->grad);
    affine_backward(c.features, w_c_[l]->value, d_state.c[l], nullptr, &w_c_[l]->grad,
                    &b_c_[l]->grad);
  }
}

std::vector<ParamPtr> FeatureEncoder::params() const {
  std::vector<ParamPtr> out;
  for (std::size_t l = 0; l < depth_; ++l) {
    out.push_back(w_h_[l]);
    out.push_back(b_h_[l]);
    out.push_back(w_c_[l]);
    out.push_back(b_c_[l]);
  }
  return out;
}

Decoder::Decoder(std::string id, std::size_t vocab_size, std::size_t embedding_dim,
                 std::size_t depth, std::size_t hidden_dim, double dropout_p)
    : id_(std::move(id)),
      embed_(id_ + "/embed/table", vocab_size, embedding_dim),
      stack_(id_, depth, embedding_dim, hidden_dim, dropout_p),
      proj_w_(std::make_shared<Parameter>(id_ + "/proj/W",
                                          std::vector<std::size_t>{vocab_size, hidden_dim})),
      proj_b_(std::make_shared<Parameter>(id_ + "/proj/b", std::vector<std::size_t>{vocab_size})) {}

NllResult Decoder::teacher_forced_nll(const EncoderState& enc_state, const Batch& batch,
                                      bool train_mode, Rng* rng, DecoderCache* cache,
                                      std::uint64_t* correct_out) const {
  if (enc_state.depth() != stack_.depth()) {
    throw DimensionError("decoder " + id_ + " depth " + std::to_string(stack_.depth()) +
                         " does not match encoder state depth " +
                         std::to_string(enc_state.depth()));
  }
  const std::size_t steps = batch.target_in.cols;

  std::vector<Tensor> inputs;
  std::vector<std::vector<std::int32_t>> in_ids;
  inputs.reserve(steps);
  in_ids.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<std::int32_t> ids = batch.target_in.column(t);
    inputs.push_back(embed_.lookup(ids));
    in_ids.push_back(std::move(ids));
  }

  std::vector<Tensor> top = stack_.forward(inputs, enc_state, train_mode, rng, nullptr,
                                           cache != nullptr ? &cache->stack : nullptr);

  NllResult res;
  if (cache != nullptr) {
    cache->step_inputs = std::move(inputs);
    cache->in_ids = std::move(in_ids);
    cache->d_logits.clear();
    cache->top_h = top;
  }
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor logits = affine(top[t], proj_w_->value, proj_b_->value);
    std::vector<std::int32_t> targets = batch.target_out.column(t);
    if (correct_out != nullptr) {
      for (std::size_t b = 0; b < logits.rows(); ++b) {
        if (batch.target_mask[t][b] == 0) continue;
        const Real* row = logits.row(b);
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.cols(); ++i) {
          if (row[i] > row[best]) best = i;
        }
        if (static_cast<std::int32_t>(best) == targets[b]) ++*correct_out;
      }
    }
    SoftmaxXentResult sm = softmax_xent(logits, targets, batch.target_mask[t]);
    res.nll_sum += sm.loss_sum;
    for (std::uint8_t m : batch.target_mask[t]) res.token_count += m;
    if (cache != nullptr) cache->d_logits.push_back(std::move(sm.d_logits));
  }
  if (cache != nullptr) cache->valid = true;
  return res;
}

EncoderState Decoder::nll_backward(DecoderCache& cache, Real loss_scale) {
  if (!cache.valid) {
    throw StateError("decoder backward called without a cached forward pass");
  }
  const std::size_t steps = cache.d_logits.size();
  std::vector<Tensor> d_top;
  d_top.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor& d_logits = cache.d_logits[t];
    if (loss_scale != Real(1)) {
      for (Real& v : d_logits.values) v *= loss_scale;
    }
    Tensor d_h({cache.top_h[t].rows(), cache.top_h[t].cols()});
    affine_backward(cache.top_h[t], proj_w_->value, d_logits, &d_h, &proj_w_->grad,
                    &proj_b_->grad);
    d_top.push_back(std::move(d_h));
  }
  StackBackwardResult res = stack_.backward(cache.stack, d_top, nullptr);
  for (std::size_t t = 0; t < res.d_inputs.size(); ++t) {
    embed_.backward(cache.in_ids[t], res.d_inputs[t]);
  }
  cache.valid = false;
  return std::move(res.d_init);
}

Tensor Decoder::step_logits(std::int32_t prev_token, RnnState* state) const {
  const std::int32_t ids[1] = {prev_token};
  Tensor x = embed_.lookup(ids);
  Tensor h = stack_.step(x, state);
  return affine(h, proj_w_->value, proj_b_->value);
}

std::vector<ParamPtr> Decoder::params() const {
  std::vector<ParamPtr> out{embed_.table()};
  for (const ParamPtr& p : stack_.params()) out.push_back(p);
  out.push_back(proj_w_);
  out.push_back(proj_b_);
  return out;
}

namespace {

std::size_t argmax_lowest(std::span<const Real> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

std::vector<double> softmax_row(const Tensor& logits) {
  const std::size_t n = logits.cols();
  std::vector<double> probs(n);
  Real max_logit = logits.values[0];
  for (std::size_t i = 1; i < n; ++i) max_logit = std::max(max_logit, logits.values[i]);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(static_cast<double>(logits.values[i] - max_logit));
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

}  // namespace

std::vector<std::int32_t> greedy_decode(const EncoderState& enc_state, const Decoder& dec,
                                        std::size_t max_len) {
  if (max_len < 1) throw ConfigError("greedy_decode: max_len must be >= 1");
  RnnState state = enc_state;
  std::vector<std::int32_t> out;
  std::int32_t prev = Vocabulary::kBos;
  for (std::size_t step = 0; step < max_len; ++step) {
    Tensor logits = dec.step_logits(prev, &state);
    const std::int32_t tok = static_cast<std::int32_t>(argmax_lowest(logits.values));
    out.push_back(tok);
    if (tok == Vocabulary::kEos) break;
    prev = tok;
  }
  return out;
}

std::vector<std::int32_t> ensemble_greedy_decode(std::vector<EnsembleMember> members,
                                                 std::size_t max_len) {
  if (members.empty()) throw ConfigError("ensemble decode requires at least one model");
  if (max_len < 1) throw ConfigError("ensemble decode: max_len must be >= 1");
  const std::size_t vocab = members[0].decoder->vocab_size();
  for (const EnsembleMember& m : members) {
    if (m.decoder->vocab_size() != vocab) {
      throw ConfigError("ensemble decoders must share one target vocabulary size");
    }
  }
  std::vector<std::int32_t> out;
  std::int32_t prev = Vocabulary::kBos;
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<double> avg(vocab, 0.0);
    for (EnsembleMember& m : members) {
      Tensor logits = m.decoder->step_logits(prev, &m.state);
      std::vector<double> probs = softmax_row(logits);
      for (std::size_t i = 0; i < vocab; ++i) avg[i] += probs[i];
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < vocab; ++i) {
      if (avg[i] > avg[best]) best = i;
    }
    const std::int32_t tok = static_cast<std::int32_t>(best);
    out.push_back(tok);
    if (tok == Vocabulary::kEos) break;
    prev = tok;
  }
  return out;
}

}  // namespace mtseq
