#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtseq/tensor.h"

namespace mtseq {

// Token id -> row of a [V,E] table. Backward scatter-adds only into the rows
// that were looked up.
class Embedding {
 public:
  Embedding(std::string name, std::size_t vocab_size, std::size_t dim);

  Tensor lookup(std::span<const std::int32_t> ids) const;  // -> [B,E]
  void backward(std::span<const std::int32_t> ids, const Tensor& d_out);

  std::size_t vocab_size() const { return table_->value.rows(); }
  std::size_t dim() const { return table_->value.cols(); }
  const ParamPtr& table() const { return table_; }

 private:
  ParamPtr table_;
};

// Per-layer recurrent state; h and c are [B,H].
struct RnnState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;

  std::size_t depth() const { return h.size(); }
  static RnnState zeros(std::size_t depth, std::size_t batch, std::size_t hidden);
  bool operator==(const RnnState& other) const = default;
};

struct LstmStepCache {
  Tensor x;       // layer input actually fed to the cell (post-dropout)
  Tensor h_prev;
  Tensor c_prev;
  Tensor gates;   // [B,4H] post-activation, order (i, f, g, o)
  Tensor c_new;
  Tensor tanh_c;
};

// Standard LSTM cell without peepholes, gate order (input, forget,
// cell-candidate, output). Gate pre-activations come from one fused
// [B,4H] = x*Wx^T + h*Wh^T + bias map.
class LstmLayer {
 public:
  LstmLayer(const std::string& name_prefix, std::size_t input_dim, std::size_t hidden_dim);

  // h' = o . tanh(c'),  c' = f . c + i . g.
  LstmStepCache step_forward(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                             Tensor* h_out, Tensor* c_out) const;

  // Accumulates parameter gradients; d_x / d_h_prev / d_c_prev receive the
  // upstream gradients (accumulated, callers pre-zero).
  void step_backward(const LstmStepCache& cache, const Tensor& d_h, const Tensor& d_c,
                     Tensor* d_x, Tensor* d_h_prev, Tensor* d_c_prev);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  const ParamPtr& w_x() const { return w_x_; }
  const ParamPtr& w_h() const { return w_h_; }
  const ParamPtr& bias() const { return bias_; }

 private:
  std::size_t input_dim_;
  std::size_t hidden_dim_;
  ParamPtr w_x_;   // [4H, I]
  ParamPtr w_h_;   // [4H, H]
  ParamPtr bias_;  // [4H]
};

struct StackCache {
  bool valid = false;
  std::size_t steps = 0;
  std::size_t batch = 0;
  RnnState init;
  std::vector<std::vector<LstmStepCache>> cells;     // [T][L]
  std::vector<std::vector<Tensor>> dropout_masks;    // [T][L], empty rows when not training
  std::vector<std::vector<Tensor>> layer_h;          // [T][L]: h after carry blending
  std::vector<std::vector<Tensor>> layer_c;          // [T][L]
  std::vector<std::vector<std::uint8_t>> step_mask;  // [T][B], empty when no mask
  std::vector<Tensor> raw_inputs;                    // [T] pre-dropout inputs
};

struct StackBackwardResult {
  std::vector<Tensor> d_inputs;  // [T] gradients w.r.t. the pre-dropout inputs
  RnnState d_init;
};

// Deep LSTM over a sequence. Dropout is applied to the input of every layer
// (the embedding output counts as the first vertical connection) with
// inverted 1/(1-p) scaling at train time; recurrent h/c paths are never
// dropped. An optional per-step mask makes padded positions carry state
// through unchanged so batched runs match per-example runs exactly.
class RnnStack {
 public:
  RnnStack(const std::string& name_prefix, std::size_t depth, std::size_t input_dim,
           std::size_t hidden_dim, double dropout_p);

  // step_masks: [T] rows of [B] bits (1 = real token), or empty for none.
  // Returns top-layer h per step; final per-layer state goes to *final_state.
  std::vector<Tensor> forward(std::span<const Tensor> inputs, const RnnState& init,
                              bool train_mode, Rng* rng, RnnState* final_state,
                              StackCache* cache,
                              std::span<const std::vector<std::uint8_t>> step_masks = {}) const;

  // Exact reverse-time gradient accumulation. d_top may be empty (treated as
  // zeros); d_final may be null. Throws StateError when cache is not a live
  // forward cache.
  StackBackwardResult backward(StackCache& cache, std::span<const Tensor> d_top,
                               const RnnState* d_final);

  // Single eval-mode step for decoding; mutates state in place.
  Tensor step(const Tensor& x, RnnState* state) const;

  std::size_t depth() const { return layers_.size(); }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t input_dim() const { return input_dim_; }
  double dropout_p() const { return dropout_p_; }
  const std::vector<LstmLayer>& layers() const { return layers_; }
  std::vector<LstmLayer>& layers() { return layers_; }
  std::vector<ParamPtr> params() const;

 private:
  std::size_t input_dim_;
  std::size_t hidden_dim_;
  double dropout_p_;
  std::vector<LstmLayer> layers_;
};

}  // namespace mtseq
