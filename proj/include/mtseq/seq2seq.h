#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mtseq/corpus.h"
#include "mtseq/lstm.h"
#include "mtseq/tensor.h"

namespace mtseq {

// The exact information handed encoder -> decoder: the final per-layer
// recurrent state, nothing per-step.
using EncoderState = RnnState;

struct EncoderCache {
  virtual ~EncoderCache() = default;
};

class Encoder {
 public:
  Encoder(std::string id, std::size_t depth, std::size_t hidden_dim)
      : id_(std::move(id)), depth_(depth), hidden_dim_(hidden_dim) {}
  virtual ~Encoder() = default;

  // Runs over the batch's (already reversed) source and returns the final
  // per-layer state. When cache_out is non-null the invocation can be
  // followed by backward().
  virtual EncoderState encode(const Batch& batch, bool train_mode, Rng* rng,
                              std::unique_ptr<EncoderCache>* cache_out) = 0;
  virtual void backward(EncoderCache& cache, const EncoderState& d_state) = 0;
  virtual std::vector<ParamPtr> params() const = 0;

  const std::string& id() const { return id_; }
  std::size_t depth() const { return depth_; }
  std::size_t hidden_dim() const { return hidden_dim_; }

 protected:
  std::string id_;
  std::size_t depth_;
  std::size_t hidden_dim_;
};

// Embedding + LSTM stack over a token sequence.
class SequenceEncoder : public Encoder {
 public:
  SequenceEncoder(std::string id, std::size_t vocab_size, std::size_t embedding_dim,
                  std::size_t depth, std::size_t hidden_dim, double dropout_p);

  EncoderState encode(const Batch& batch, bool train_mode, Rng* rng,
                      std::unique_ptr<EncoderCache>* cache_out) override;
  void backward(EncoderCache& cache, const EncoderState& d_state) override;
  std::vector<ParamPtr> params() const override;

  const Embedding& embedding() const { return embed_; }
  RnnStack& stack() { return stack_; }

 private:
  Embedding embed_;
  RnnStack stack_;
};

// Affine projection from a fixed feature vector to each layer's (h, c).
class FeatureEncoder : public Encoder {
 public:
  FeatureEncoder(std::string id, std::size_t feature_dim, std::size_t depth,
                 std::size_t hidden_dim);

  EncoderState encode(const Batch& batch, bool train_mode, Rng* rng,
                      std::unique_ptr<EncoderCache>* cache_out) override;
  void backward(EncoderCache& cache, const EncoderState& d_state) override;
  std::vector<ParamPtr> params() const override;

  std::size_t feature_dim() const { return feature_dim_; }

 private:
  std::size_t feature_dim_;
  std::vector<ParamPtr> w_h_, b_h_, w_c_, b_c_;  // per layer
};

struct DecoderCache {
  StackCache stack;
  std::vector<Tensor> step_inputs;       // embedded target_in columns
  std::vector<Tensor> top_h;             // [T][B,H]
  std::vector<Tensor> d_logits;          // [T][B,V] from softmax_xent
  std::vector<std::vector<std::int32_t>> in_ids;  // [T][B]
  bool valid = false;
};

struct NllResult {
  double nll_sum = 0.0;
  std::size_t token_count = 0;
};

// Target embedding + LSTM stack + output projection.
class Decoder {
 public:
  Decoder(std::string id, std::size_t vocab_size, std::size_t embedding_dim, std::size_t depth,
          std::size_t hidden_dim, double dropout_p);

  // Teacher-forced negative log-likelihood over the batch target, decoder
  // initialized from enc_state. token_count covers scored positions
  // including </s>. When correct_out is non-null it receives the number of
  // scored positions whose argmax logit hits the target.
  NllResult teacher_forced_nll(const EncoderState& enc_state, const Batch& batch, bool train_mode,
                               Rng* rng, DecoderCache* cache,
                               std::uint64_t* correct_out = nullptr) const;

  // Backpropagates loss_scale * d(nll_sum); accumulates parameter gradients
  // and returns the gradient w.r.t. the encoder state.
  EncoderState nll_backward(DecoderCache& cache, Real loss_scale);

  // Per-step distribution for decoding; mutates state.
  Tensor step_logits(std::int32_t prev_token, RnnState* state) const;

  std::vector<ParamPtr> params() const;
  const std::string& id() const { return id_; }
  std::size_t vocab_size() const { return proj_w_->value.rows(); }
  std::size_t depth() const { return stack_.depth(); }
  std::size_t hidden_dim() const { return stack_.hidden_dim(); }
  const Embedding& embedding() const { return embed_; }
  RnnStack& stack() { return stack_; }
  const ParamPtr& proj_w() const { return proj_w_; }
  const ParamPtr& proj_b() const { return proj_b_; }

 private:
  std::string id_;
  Embedding embed_;
  RnnStack stack_;
  ParamPtr proj_w_;  // [V,H]
  ParamPtr proj_b_;  // [V]
};

// Argmax decoding with prediction feedback; stops at </s> or max_len. Ties
// break toward the lowest token id. The returned list includes </s> when it
// was emitted.
std::vector<std::int32_t> greedy_decode(const EncoderState& enc_state, const Decoder& dec,
                                        std::size_t max_len);

struct EnsembleMember {
  EncoderState state;
  const Decoder* decoder = nullptr;
};

// Per step, averages the member softmax distributions, takes the argmax and
// feeds the chosen token to every member.
std::vector<std::int32_t> ensemble_greedy_decode(std::vector<EnsembleMember> members,
                                                 std::size_t max_len);

}  // namespace mtseq
