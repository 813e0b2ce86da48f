#include "mtseq/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mtseq/error.h"

namespace mtseq {

Tensor::Tensor(std::vector<std::size_t> dims) : shape(std::move(dims)) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(*this));
    n *= d;
  }
  values.assign(shape.empty() ? 0 : n, Real(0));
}

void Tensor::fill(Real x) { std::fill(values.begin(), values.end(), x); }

bool Tensor::all_finite() const {
  for (Real v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_string(const Tensor& t) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) os << ",";
    os << t.shape[i];
  }
  os << "]";
  return os.str();
}

void init_uniform(Parameter& p, Real lo, Real hi, Rng& rng) {
  if (!(lo < hi)) {
    throw ConfigError("init_uniform: empty range [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + ") for " + p.name);
  }
  for (Real& v : p.value.values) {
    v = static_cast<Real>(rng.uniform(lo, hi));
  }
}

static void check_2d(const Tensor& t, const char* what) {
  if (t.shape.size() != 2) {
    throw DimensionError(std::string(what) + " must be 2-d, got " + shape_string(t));
  }
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_2d(x, "affine input");
  check_2d(w, "affine weight");
  const std::size_t batch = x.rows(), in = x.cols(), out = w.rows();
  if (w.cols() != in || b.numel() != out) {
    throw DimensionError("affine shape mismatch: x=" + shape_string(x) + " w=" + shape_string(w) +
                         " b=" + shape_string(b));
  }
  Tensor y({batch, out});
  for (std::size_t r = 0; r < batch; ++r) {
    const Real* xr = x.row(r);
    Real* yr = y.row(r);
    for (std::size_t c = 0; c < out; ++c) {
      const Real* wc = w.row(c);
      Real acc = b.values[c];
      for (std::size_t k = 0; k < in; ++k) acc += xr[k] * wc[k];
      yr[c] = acc;
    }
  }
  return y;
}

void affine_backward(const Tensor& x, const Tensor& w, const Tensor& d_out, Tensor* d_x,
                     Tensor* d_w, Tensor* d_b) {
  const std::size_t batch = x.rows(), in = x.cols(), out = w.rows();
  if (d_out.rows() != batch || d_out.cols() != out) {
    throw DimensionError("affine_backward shape mismatch: x=" + shape_string(x) +
                         " d_out=" + shape_string(d_out));
  }
  for (std::size_t r = 0; r < batch; ++r) {
    const Real* dor = d_out.row(r);
    const Real* xr = x.row(r);
    if (d_x != nullptr) {
      Real* dxr = d_x->row(r);
      for (std::size_t c = 0; c < out; ++c) {
        const Real g = dor[c];
        if (g == Real(0)) continue;
        const Real* wc = w.row(c);
        for (std::size_t k = 0; k < in; ++k) dxr[k] += g * wc[k];
      }
    }
    if (d_w != nullptr) {
      for (std::size_t c = 0; c < out; ++c) {
        const Real g = dor[c];
        if (g == Real(0)) continue;
        Real* dwc = d_w->row(c);
        for (std::size_t k = 0; k < in; ++k) dwc[k] += g * xr[k];
      }
    }
    if (d_b != nullptr) {
      for (std::size_t c = 0; c < out; ++c) d_b->values[c] += dor[c];
    }
  }
}

SoftmaxXentResult softmax_xent(const Tensor& logits, std::span<const std::int32_t> targets,
                               std::span<const std::uint8_t> mask) {
  check_2d(logits, "softmax_xent logits");
  const std::size_t batch = logits.rows(), vocab = logits.cols();
  if (targets.size() != batch || mask.size() != batch) {
    throw DimensionError("softmax_xent: logits " + shape_string(logits) + " vs " +
                         std::to_string(targets.size()) + " targets, " +
                         std::to_string(mask.size()) + " mask bits");
  }
  SoftmaxXentResult res;
  res.d_logits = Tensor({batch, vocab});
  for (std::size_t r = 0; r < batch; ++r) {
    if (mask[r] == 0) continue;
    const std::int32_t target = targets[r];
    if (target < 0 || static_cast<std::size_t>(target) >= vocab) {
      throw IndexError("softmax_xent: target id " + std::to_string(target) +
                       " out of range for vocab " + std::to_string(vocab));
    }
    const Real* lr = logits.row(r);
    Real max_logit = lr[0];
    for (std::size_t c = 1; c < vocab; ++c) max_logit = std::max(max_logit, lr[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) denom += std::exp(static_cast<double>(lr[c] - max_logit));
    Real* dr = res.d_logits.row(r);
    for (std::size_t c = 0; c < vocab; ++c) {
      dr[c] = static_cast<Real>(std::exp(static_cast<double>(lr[c] - max_logit)) / denom);
    }
    res.loss_sum -= static_cast<double>(lr[target] - max_logit) - std::log(denom);
    dr[target] -= Real(1);
  }
  return res;
}

double global_grad_norm(std::span<const ParamPtr> params) {
  double sq = 0.0;
  for (const ParamPtr& p : params) {
    for (Real g : p->grad.values) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

}  // namespace mtseq
