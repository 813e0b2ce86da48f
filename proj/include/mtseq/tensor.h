#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mtseq/rng.h"

namespace mtseq {

#ifdef MTSEQ_REAL32
using Real = float;
#else
using Real = double;
#endif

// Dense row-major tensor. Plain value type: copy/move/compare like a vector.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<Real> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);

  static Tensor zeros(std::vector<std::size_t> dims) { return Tensor(std::move(dims)); }

  std::size_t numel() const { return values.size(); }
  bool empty() const { return values.empty(); }

  // 2-d accessors; most of the model runs on [rows, cols] matrices.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }
  Real& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  Real at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  Real* row(std::size_t r) { return values.data() + r * cols(); }
  const Real* row(std::size_t r) const { return values.data() + r * cols(); }

  void fill(Real x);
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;
};

std::string shape_string(const Tensor& t);

// Named weight with its gradient buffer. Training code shares Parameters
// across modules through shared_ptr; identity of the pointer is identity of
// the weight.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  std::uint64_t update_count = 0;

  Parameter(std::string param_name, std::vector<std::size_t> dims)
      : name(std::move(param_name)), value(dims), grad(std::move(dims)) {}

  void zero_grad() { grad.fill(Real(0)); }
};

using ParamPtr = std::shared_ptr<Parameter>;

// Fills p.value with iid uniform draws from [lo, hi).
void init_uniform(Parameter& p, Real lo, Real hi, Rng& rng);

// out[r,c] = sum_k x[r,k] * w[c,k] + b[c].   x: [B,I], w: [O,I], b: [O].
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

// Gradient of the affine map above. Accumulates into any non-null output:
//   d_x[r,k] += sum_c d_out[r,c] * w[c,k]
//   d_w[c,k] += sum_r d_out[r,c] * x[r,k]
//   d_b[c]   += sum_r d_out[r,c]
void affine_backward(const Tensor& x, const Tensor& w, const Tensor& d_out,
                     Tensor* d_x, Tensor* d_w, Tensor* d_b);

struct SoftmaxXentResult {
  double loss_sum = 0.0;  // sum of -log softmax(logits_b)[target_b] over unmasked rows
  Tensor d_logits;        // softmax - onehot on unmasked rows, zero on masked rows
};

// Row-wise cross entropy with max-subtraction stabilization. Masked rows
// contribute zero loss and zero gradient.
SoftmaxXentResult softmax_xent(const Tensor& logits, std::span<const std::int32_t> targets,
                               std::span<const std::uint8_t> mask);

// sqrt of the sum of squares over every gradient entry of every parameter.
double global_grad_norm(std::span<const ParamPtr> params);

}  // namespace mtseq
