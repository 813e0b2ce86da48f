#include "mtseq/lstm.h"

#include <cmath>

#include "mtseq/error.h"

namespace mtseq {

namespace {

inline Real sigmoid(Real x) { return Real(1) / (Real(1) + std::exp(-x)); }

// out += a * b^T.   a: [B,K], b: [M,K], out: [B,M]
void add_matmul_nt(const Tensor& a, const Tensor& b, Tensor* out) {
  const std::size_t batch = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t r = 0; r < batch; ++r) {
    const Real* ar = a.row(r);
    Real* or_ = out->row(r);
    for (std::size_t c = 0; c < m; ++c) {
      const Real* bc = b.row(c);
      Real acc = 0;
      for (std::size_t j = 0; j < k; ++j) acc += ar[j] * bc[j];
      or_[c] += acc;
    }
  }
}

}  // namespace

Embedding::Embedding(std::string name, std::size_t vocab_size, std::size_t dim)
    : table_(std::make_shared<Parameter>(std::move(name), std::vector<std::size_t>{vocab_size, dim})) {}

Tensor Embedding::lookup(std::span<const std::int32_t> ids) const {
  const std::size_t dim = this->dim();
  Tensor out({ids.size(), dim});
  for (std::size_t b = 0; b < ids.size(); ++b) {
    const std::int32_t id = ids[b];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) {
      throw IndexError("embedding lookup id " + std::to_string(id) + " out of range for vocab " +
                       std::to_string(vocab_size()));
    }
    const Real* src = table_->value.row(static_cast<std::size_t>(id));
    Real* dst = out.row(b);
    for (std::size_t k = 0; k < dim; ++k) dst[k] = src[k];
  }
  return out;
}

void Embedding::backward(std::span<const std::int32_t> ids, const Tensor& d_out) {
  const std::size_t dim = this->dim();
  if (d_out.rows() != ids.size() || d_out.cols() != dim) {
    throw DimensionError("embedding backward shape mismatch: " + shape_string(d_out));
  }
  for (std::size_t b = 0; b < ids.size(); ++b) {
    Real* dst = table_->grad.row(static_cast<std::size_t>(ids[b]));
    const Real* src = d_out.row(b);
    for (std::size_t k = 0; k < dim; ++k) dst[k] += src[k];
  }
}

RnnState RnnState::zeros(std::size_t depth, std::size_t batch, std::size_t hidden) {
  RnnState s;
  s.h.assign(depth, Tensor({batch, hidden}));
  s.c.assign(depth, Tensor({batch, hidden}));
  return s;
}

LstmLayer::LstmLayer(const std::string& name_prefix, std::size_t input_dim, std::size_t hidden_dim)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      w_x_(std::make_shared<Parameter>(name_prefix + "/W_x",
                                       std::vector<std::size_t>{4 * hidden_dim, input_dim})),
      w_h_(std::make_shared<Parameter>(name_prefix + "/W_h",
                                       std::vector<std::size_t>{4 * hidden_dim, hidden_dim})),
      bias_(std::make_shared<Parameter>(name_prefix + "/bias",
                                        std::vector<std::size_t>{4 * hidden_dim})) {}

LstmStepCache LstmLayer::step_forward(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                                      Tensor* h_out, Tensor* c_out) const {
  if (x.cols() != input_dim_ || h_prev.cols() != hidden_dim_ || c_prev.cols() != hidden_dim_ ||
      x.rows() != h_prev.rows() || h_prev.rows() != c_prev.rows()) {
    throw DimensionError("lstm_cell shape mismatch: x=" + shape_string(x) +
                         " h=" + shape_string(h_prev) + " c=" + shape_string(c_prev) +
                         " expected input_dim=" + std::to_string(input_dim_) +
                         " hidden_dim=" + std::to_string(hidden_dim_));
  }
  const std::size_t batch = x.rows(), hidden = hidden_dim_;

  Tensor z = affine(x, w_x_->value, bias_->value);  // [B,4H]
  add_matmul_nt(h_prev, w_h_->value, &z);

  LstmStepCache cache;
  cache.x = x;
  cache.h_prev = h_prev;
  cache.c_prev = c_prev;
  cache.gates = Tensor({batch, 4 * hidden});
  cache.c_new = Tensor({batch, hidden});
  cache.tanh_c = Tensor({batch, hidden});
  *h_out = Tensor({batch, hidden});
  *c_out = Tensor({batch, hidden});

  for (std::size_t b = 0; b < batch; ++b) {
    const Real* zr = z.row(b);
    Real* gr = cache.gates.row(b);
    const Real* cp = c_prev.row(b);
    Real* cn = cache.c_new.row(b);
    Real* tc = cache.tanh_c.row(b);
    Real* hr = h_out->row(b);
    Real* cr = c_out->row(b);
    for (std::size_t j = 0; j < hidden; ++j) {
      const Real gi = sigmoid(zr[j]);
      const Real gf = sigmoid(zr[hidden + j]);
      const Real gg = std::tanh(zr[2 * hidden + j]);
      const Real go = sigmoid(zr[3 * hidden + j]);
      gr[j] = gi;
      gr[hidden + j] = gf;
      gr[2 * hidden + j] = gg;
      gr[3 * hidden + j] = go;
      cn[j] = gf * cp[j] + gi * gg;
      tc[j] = std::tanh(cn[j]);
      hr[j] = go * tc[j];
      cr[j] = cn[j];
    }
  }
  return cache;
}

void LstmLayer::step_backward(const LstmStepCache& cache, const Tensor& d_h, const Tensor& d_c,
                              Tensor* d_x, Tensor* d_h_prev, Tensor* d_c_prev) {
  const std::size_t batch = cache.x.rows(), hidden = hidden_dim_;
  Tensor d_z({batch, 4 * hidden});

  for (std::size_t b = 0; b < batch; ++b) {
    const Real* gr = cache.gates.row(b);
    const Real* tc = cache.tanh_c.row(b);
    const Real* cp = cache.c_prev.row(b);
    const Real* dh = d_h.row(b);
    const Real* dc = d_c.row(b);
    Real* dz = d_z.row(b);
    Real* dcp = d_c_prev->row(b);
    for (std::size_t j = 0; j < hidden; ++j) {
      const Real gi = gr[j], gf = gr[hidden + j], gg = gr[2 * hidden + j], go = gr[3 * hidden + j];
      const Real dc_total = dc[j] + dh[j] * go * (Real(1) - tc[j] * tc[j]);
      dz[3 * hidden + j] = dh[j] * tc[j] * go * (Real(1) - go);          // output gate
      dz[hidden + j] = dc_total * cp[j] * gf * (Real(1) - gf);          // forget gate
      dz[j] = dc_total * gg * gi * (Real(1) - gi);                      // input gate
      dz[2 * hidden + j] = dc_total * gi * (Real(1) - gg * gg);         // candidate
      dcp[j] += dc_total * gf;
    }
  }

  affine_backward(cache.x, w_x_->value, d_z, d_x, &w_x_->grad, &bias_->grad);
  affine_backward(cache.h_prev, w_h_->value, d_z, d_h_prev, &w_h_->grad, nullptr);
}

RnnStack::RnnStack(const std::string& name_prefix, std::size_t depth, std::size_t input_dim,
                   std::size_t hidden_dim, double dropout_p)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), dropout_p_(dropout_p) {
  if (depth < 1) throw ConfigError("rnn stack depth must be >= 1");
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw ConfigError("dropout probability must be in [0, 1)");
  }
  layers_.reserve(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    layers_.emplace_back(name_prefix + "/layer" + std::to_string(l),
                         l == 0 ? input_dim : hidden_dim, hidden_dim);
  }
}

std::vector<ParamPtr> RnnStack::params() const {
  std::vector<ParamPtr> out;
  for (const LstmLayer& layer : layers_) {
    out.push_back(layer.w_x());
    out.push_back(layer.w_h());
    out.push_back(layer.bias());
  }
  return out;
}

std::vector<Tensor> RnnStack::forward(std::span<const Tensor> inputs, const RnnState& init,
                                      bool train_mode, Rng* rng, RnnState* final_state,
                                      StackCache* cache,
                                      std::span<const std::vector<std::uint8_t>> step_masks) const {
  const std::size_t steps = inputs.size();
  const std::size_t depth = layers_.size();
  if (init.depth() != depth) {
    throw DimensionError("initial state depth " + std::to_string(init.depth()) +
                         " does not match stack depth " + std::to_string(depth));
  }
  const std::size_t batch = steps > 0 ? inputs[0].rows() : init.h[0].rows();
  const bool use_dropout = train_mode && dropout_p_ > 0.0;
  if (use_dropout && rng == nullptr) {
    throw StateError("training-mode dropout requires an rng");
  }
  const bool masked = !step_masks.empty();
  if (masked && step_masks.size() != steps) {
    throw DimensionError("step mask count " + std::to_string(step_masks.size()) +
                         " does not match sequence length " + std::to_string(steps));
  }

  if (cache != nullptr) {
    *cache = StackCache{};
    cache->valid = true;
    cache->steps = steps;
    cache->batch = batch;
    cache->init = init;
    cache->cells.resize(steps);
    cache->dropout_masks.resize(steps);
    cache->layer_h.resize(steps);
    cache->layer_c.resize(steps);
    if (masked) cache->step_mask.assign(step_masks.begin(), step_masks.end());
    cache->raw_inputs.assign(inputs.begin(), inputs.end());
  }

  std::vector<Tensor> h_prev = init.h;
  std::vector<Tensor> c_prev = init.c;
  std::vector<Tensor> top;
  top.reserve(steps);
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - dropout_p_));

  for (std::size_t t = 0; t < steps; ++t) {
    Tensor layer_input = inputs[t];
    if (cache != nullptr) {
      cache->cells[t].reserve(depth);
      cache->dropout_masks[t].resize(depth);
      cache->layer_h[t].resize(depth);
      cache->layer_c[t].resize(depth);
    }
    for (std::size_t l = 0; l < depth; ++l) {
      Tensor x = layer_input;
      if (use_dropout) {
        Tensor mask({x.rows(), x.cols()});
        for (Real& m : mask.values) m = rng->flip(dropout_p_) ? Real(0) : keep_scale;
        for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] *= mask.values[i];
        if (cache != nullptr) cache->dropout_masks[t][l] = std::move(mask);
      }
      Tensor h_cell, c_cell;
      LstmStepCache cell = layers_[l].step_forward(x, h_prev[l], c_prev[l], &h_cell, &c_cell);
      if (masked) {
        const std::vector<std::uint8_t>& m = step_masks[t];
        for (std::size_t b = 0; b < batch; ++b) {
          if (m[b] == 0) {
            for (std::size_t j = 0; j < hidden_dim_; ++j) {
              h_cell.at(b, j) = h_prev[l].at(b, j);
              c_cell.at(b, j) = c_prev[l].at(b, j);
            }
          }
        }
      }
      if (cache != nullptr) {
        cache->cells[t].push_back(std::move(cell));
        cache->layer_h[t][l] = h_cell;
        cache->layer_c[t][l] = c_cell;
      }
      h_prev[l] = h_cell;
      c_prev[l] = std::move(c_cell);
      layer_input = std::move(h_cell);
    }
    top.push_back(h_prev[depth - 1]);
  }

  if (final_state != nullptr) {
    final_state->h = h_prev;
    final_state->c = c_prev;
  }
  return top;
}

StackBackwardResult RnnStack::backward(StackCache& cache, std::span<const Tensor> d_top,
                                       const RnnState* d_final) {
  if (!cache.valid) {
    throw StateError("rnn stack backward called without a cached forward pass");
  }
  const std::size_t steps = cache.steps;
  const std::size_t depth = layers_.size();
  const std::size_t batch = cache.batch;
  if (!d_top.empty() && d_top.size() != steps) {
    throw DimensionError("d_top length " + std::to_string(d_top.size()) +
                         " does not match cached steps " + std::to_string(steps));
  }

  std::vector<Tensor> d_h, d_c;
  if (d_final != nullptr) {
    d_h = d_final->h;
    d_c = d_final->c;
  } else {
    d_h.assign(depth, Tensor({batch, hidden_dim_}));
    d_c.assign(depth, Tensor({batch, hidden_dim_}));
  }

  StackBackwardResult res;
  res.d_inputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    res.d_inputs.emplace_back(
        Tensor({cache.raw_inputs[t].rows(), cache.raw_inputs[t].cols()}));
  }

  for (std::size_t ti = steps; ti-- > 0;) {
    if (!d_top.empty()) {
      for (std::size_t i = 0; i < d_h[depth - 1].values.size(); ++i) {
        d_h[depth - 1].values[i] += d_top[ti].values[i];
      }
    }
    const bool masked = !cache.step_mask.empty();
    for (std::size_t l = depth; l-- > 0;) {
      Tensor d_h_cell = d_h[l];
      Tensor d_c_cell = d_c[l];
      Tensor d_h_carry({batch, hidden_dim_});
      Tensor d_c_carry({batch, hidden_dim_});
      if (masked) {
        const std::vector<std::uint8_t>& m = cache.step_mask[ti];
        for (std::size_t b = 0; b < batch; ++b) {
          if (m[b] == 0) {
            for (std::size_t j = 0; j < hidden_dim_; ++j) {
              d_h_carry.at(b, j) = d_h_cell.at(b, j);
              d_c_carry.at(b, j) = d_c_cell.at(b, j);
              d_h_cell.at(b, j) = 0;
              d_c_cell.at(b, j) = 0;
            }
          }
        }
      }
      const LstmStepCache& cell = cache.cells[ti][l];
      Tensor d_x({cell.x.rows(), cell.x.cols()});
      Tensor d_h_prev({batch, hidden_dim_});
      Tensor d_c_prev({batch, hidden_dim_});
      layers_[l].step_backward(cell, d_h_cell, d_c_cell, &d_x, &d_h_prev, &d_c_prev);
      for (std::size_t i = 0; i < d_h_prev.values.size(); ++i) {
        d_h_prev.values[i] += d_h_carry.values[i];
        d_c_prev.values[i] += d_c_carry.values[i];
      }
      d_h[l] = std::move(d_h_prev);
      d_c[l] = std::move(d_c_prev);

      if (!cache.dropout_masks[ti].empty() && !cache.dropout_masks[ti][l].empty()) {
        const Tensor& mask = cache.dropout_masks[ti][l];
        for (std::size_t i = 0; i < d_x.values.size(); ++i) d_x.values[i] *= mask.values[i];
      }
      if (l == 0) {
        for (std::size_t i = 0; i < d_x.values.size(); ++i) {
          res.d_inputs[ti].values[i] += d_x.values[i];
        }
      } else {
        for (std::size_t i = 0; i < d_x.values.size(); ++i) d_h[l - 1].values[i] += d_x.values[i];
      }
    }
  }

  res.d_init.h = std::move(d_h);
  res.d_init.c = std::move(d_c);
  cache.valid = false;
  return res;
}

Tensor RnnStack::step(const Tensor& x, RnnState* state) const {
  Tensor layer_input = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Tensor h_new, c_new;
    layers_[l].step_forward(layer_input, state->h[l], state->c[l], &h_new, &c_new);
    state->h[l] = h_new;
    state->c[l] = std::move(c_new);
    layer_input = std::move(h_new);
  }
  return layer_input;
}

}  // namespace mtseq
