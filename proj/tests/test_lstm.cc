#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtseq/error.h"
#include "mtseq/lstm.h"
#include "oracles.h"

using namespace mtseq;
using namespace mtseq::testing;

namespace {

void randomize_stack(RnnStack& stack, Rng& rng, double scale = 0.4) {
  for (const ParamPtr& p : stack.params()) {
    init_uniform(*p, static_cast<Real>(-scale), static_cast<Real>(scale), rng);
  }
}

// Scalar objective: fixed random projection of every top-layer output plus
// the final state, so every path through the stack carries gradient.
double stack_loss(RnnStack& stack, const std::vector<Tensor>& inputs, const RnnState& init,
                  const Tensor& probe) {
  RnnState final_state;
  std::vector<Tensor> top = stack.forward(inputs, init, false, nullptr, &final_state, nullptr);
  double loss = 0;
  std::size_t k = 0;
  for (const Tensor& h : top) {
    for (Real v : h.values) loss += static_cast<double>(v) * probe.values[k++ % probe.numel()];
  }
  for (const Tensor& h : final_state.h) {
    for (Real v : h.values) loss += 0.5 * static_cast<double>(v) * probe.values[k++ % probe.numel()];
  }
  for (const Tensor& c : final_state.c) {
    for (Real v : c.values) loss += 0.25 * static_cast<double>(v) * probe.values[k++ % probe.numel()];
  }
  return loss;
}

}  // namespace

TEST_CASE("lstm cell with zero weights maps zero state to zero") {
  LstmLayer layer("l", 3, 4);
  Tensor x({2, 3}), h({2, 4}), c({2, 4});
  Rng rng(3);
  fill_uniform(x, rng, -1, 1);
  Tensor h_out, c_out;
  layer.step_forward(x, h, c, &h_out, &c_out);
  for (Real v : h_out.values) CHECK(v == Real(0));
  for (Real v : c_out.values) CHECK(v == Real(0));
}

TEST_CASE("saturated forget gate carries the cell state through") {
  LstmLayer layer("l", 2, 3);
  Rng rng(5);
  for (const ParamPtr& p : {layer.w_x(), layer.w_h()}) init_uniform(*p, -0.2, 0.2, rng);
  // Push the forget gate to its +inf limit.
  for (std::size_t j = 0; j < 3; ++j) layer.bias()->value.values[3 + j] = Real(50);

  Tensor x({1, 2}), h({1, 3}), c({1, 3});
  fill_uniform(x, rng, -1, 1);
  fill_uniform(h, rng, -1, 1);
  c.values = {Real(0.3), Real(-0.7), Real(1.1)};
  Tensor h_out, c_out;
  LstmStepCache cache = layer.step_forward(x, h, c, &h_out, &c_out);
  for (std::size_t j = 0; j < 3; ++j) {
    const Real i_gate = cache.gates.at(0, j);
    const Real g_gate = cache.gates.at(0, 6 + j);
    CHECK(c_out.at(0, j) == doctest::Approx(c.at(0, j) + i_gate * g_gate).epsilon(1e-9));
  }
}

TEST_CASE("lstm cell shape mismatch raises a dimension error") {
  LstmLayer layer("l", 3, 4);
  Tensor x({2, 5}), h({2, 4}), c({2, 4}), h_out, c_out;
  CHECK_THROWS_AS(layer.step_forward(x, h, c, &h_out, &c_out), DimensionError);
}

TEST_CASE("cell gradients match finite differences through 3 unrolled steps") {
  Rng rng(17);
  RnnStack stack("cell", 1, 3, 4, 0.0);
  randomize_stack(stack, rng);
  std::vector<Tensor> inputs(3, Tensor({2, 3}));
  for (Tensor& t : inputs) fill_uniform(t, rng, -1, 1);
  RnnState init = RnnState::zeros(1, 2, 4);
  Tensor probe({64});
  fill_uniform(probe, rng, -1, 1);

  StackCache cache;
  RnnState final_state;
  std::vector<Tensor> top = stack.forward(inputs, init, false, nullptr, &final_state, &cache);
  std::vector<Tensor> d_top;
  std::size_t k = 0;
  for (const Tensor& h : top) {
    Tensor d({h.rows(), h.cols()});
    for (Real& v : d.values) v = probe.values[k++ % probe.numel()];
    d_top.push_back(std::move(d));
  }
  RnnState d_final = RnnState::zeros(1, 2, 4);
  for (Tensor& h : d_final.h) {
    for (Real& v : h.values) v = Real(0.5) * probe.values[k++ % probe.numel()];
  }
  for (Tensor& c : d_final.c) {
    for (Real& v : c.values) v = Real(0.25) * probe.values[k++ % probe.numel()];
  }
  stack.backward(cache, d_top, &d_final);

  auto loss = [&]() { return stack_loss(stack, inputs, init, probe); };
  for (const ParamPtr& p : stack.params()) {
    CHECK(max_rel_error(finite_difference(&p->value.values, loss), p->grad.values) < 1e-4);
  }
}

TEST_CASE("dropout 0 makes train and eval forward identical") {
  Rng rng(23);
  RnnStack stack("s", 2, 3, 4, 0.0);
  randomize_stack(stack, rng);
  std::vector<Tensor> inputs(4, Tensor({2, 3}));
  for (Tensor& t : inputs) fill_uniform(t, rng, -1, 1);
  RnnState init = RnnState::zeros(2, 2, 4);

  Rng dropout_rng(99);
  RnnState final_train, final_eval;
  std::vector<Tensor> top_train =
      stack.forward(inputs, init, true, &dropout_rng, &final_train, nullptr);
  std::vector<Tensor> top_eval = stack.forward(inputs, init, false, nullptr, &final_eval, nullptr);
  CHECK(top_train == top_eval);
  CHECK(final_train == final_eval);
}

TEST_CASE("dropout 0.2 in eval mode is deterministic and mask-free") {
  Rng rng(29);
  RnnStack dropped("a", 2, 3, 4, 0.2);
  randomize_stack(dropped, rng);
  RnnStack plain("b", 2, 3, 4, 0.0);
  for (std::size_t i = 0; i < dropped.params().size(); ++i) {
    plain.params()[i]->value = dropped.params()[i]->value;
  }
  std::vector<Tensor> inputs(3, Tensor({2, 3}));
  for (Tensor& t : inputs) fill_uniform(t, rng, -1, 1);
  RnnState init = RnnState::zeros(2, 2, 4);
  RnnState f1, f2;
  std::vector<Tensor> a = dropped.forward(inputs, init, false, nullptr, &f1, nullptr);
  std::vector<Tensor> b = plain.forward(inputs, init, false, nullptr, &f2, nullptr);
  CHECK(a == b);
  CHECK(f1 == f2);
}

TEST_CASE("inverted dropout keeps the masked layer inputs unbiased within 2 percent") {
  Rng rng(31);
  RnnStack stack("s", 2, 4, 4, 0.2);
  randomize_stack(stack, rng);
  std::vector<Tensor> inputs(2, Tensor({1, 4}));
  for (Tensor& t : inputs) fill_uniform(t, rng, 0.5, 1.5);
  RnnState init = RnnState::zeros(2, 1, 4);

  // Average the post-dropout input actually fed to layer 0 at step 0 over
  // many forward passes; inverted scaling should make it match the raw input.
  const int samples = 10000;
  Rng dropout_rng(32);
  std::vector<double> mean(4, 0.0);
  for (int s = 0; s < samples; ++s) {
    StackCache cache;
    stack.forward(inputs, init, true, &dropout_rng, nullptr, &cache);
    for (std::size_t k = 0; k < 4; ++k) {
      mean[k] += static_cast<double>(cache.cells[0][0].x.values[k]) / samples;
    }
  }
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::fabs(mean[k] / static_cast<double>(inputs[0].values[k]) - 1.0) < 0.02);
  }
}

TEST_CASE("bptt over a single step equals the cell backward") {
  Rng rng(37);
  RnnStack stack("s", 1, 3, 4, 0.0);
  randomize_stack(stack, rng);
  Tensor x({2, 3});
  fill_uniform(x, rng, -1, 1);
  RnnState init = RnnState::zeros(1, 2, 4);

  StackCache cache;
  std::vector<Tensor> inputs{x};
  std::vector<Tensor> top = stack.forward(inputs, init, false, nullptr, nullptr, &cache);
  Tensor d_top({2, 4});
  fill_uniform(d_top, rng, -1, 1);
  std::vector<Tensor> d_tops{d_top};
  stack.backward(cache, d_tops, nullptr);
  Tensor grad_wx = stack.params()[0]->grad;

  // Same thing via the cell interface directly.
  for (const ParamPtr& param : stack.params()) param->zero_grad();
  Tensor h_out, c_out, d_x({2, 3}), d_h({2, 4}), d_c({2, 4});
  LstmStepCache cell = stack.layers()[0].step_forward(x, init.h[0], init.c[0], &h_out, &c_out);
  Tensor d_c_zero({2, 4});
  stack.layers()[0].step_backward(cell, d_top, d_c_zero, &d_x, &d_h, &d_c);
  CHECK(stack.params()[0]->grad == grad_wx);
}

TEST_CASE("bptt gradients match finite differences for a deep stack") {
  Rng rng(41);
  RnnStack stack("s", 2, 5, 6, 0.0);
  randomize_stack(stack, rng);
  std::vector<Tensor> inputs(4, Tensor({2, 5}));
  for (Tensor& t : inputs) fill_uniform(t, rng, -1, 1);
  RnnState init = RnnState::zeros(2, 2, 6);
  Tensor probe({256});
  fill_uniform(probe, rng, -1, 1);

  StackCache cache;
  RnnState final_state;
  std::vector<Tensor> top = stack.forward(inputs, init, false, nullptr, &final_state, &cache);
  std::vector<Tensor> d_top;
  std::size_t k = 0;
  for (const Tensor& h : top) {
    Tensor d({h.rows(), h.cols()});
    for (Real& v : d.values) v = probe.values[k++ % probe.numel()];
    d_top.push_back(std::move(d));
  }
  RnnState d_final = RnnState::zeros(2, 2, 6);
  for (Tensor& h : d_final.h) {
    for (Real& v : h.values) v = Real(0.5) * probe.values[k++ % probe.numel()];
  }
  for (Tensor& c : d_final.c) {
    for (Real& v : c.values) v = Real(0.25) * probe.values[k++ % probe.numel()];
  }
  StackBackwardResult back = stack.backward(cache, d_top, &d_final);

  auto loss = [&]() { return stack_loss(stack, inputs, init, probe); };
  for (const ParamPtr& p : stack.params()) {
    CHECK(max_rel_error(finite_difference(&p->value.values, loss), p->grad.values) < 1e-4);
  }
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    CHECK(max_rel_error(finite_difference(&inputs[t].values, loss), back.d_inputs[t].values) <
          1e-4);
  }
}

TEST_CASE("bptt with dropout masks matches finite differences of the masked net") {
  Rng rng(43);
  RnnStack stack("s", 2, 4, 5, 0.3);
  randomize_stack(stack, rng);
  std::vector<Tensor> inputs(3, Tensor({2, 4}));
  for (Tensor& t : inputs) fill_uniform(t, rng, -1, 1);
  RnnState init = RnnState::zeros(2, 2, 5);
  Tensor probe({128});
  fill_uniform(probe, rng, -1, 1);

  Rng dropout_rng(7);
  StackCache cache;
  std::vector<Tensor> top = stack.forward(inputs, init, true, &dropout_rng, nullptr, &cache);
  std::vector<Tensor> d_top;
  std::size_t k = 0;
  for (const Tensor& h : top) {
    Tensor d({h.rows(), h.cols()});
    for (Real& v : d.values) v = probe.values[k++ % probe.numel()];
    d_top.push_back(std::move(d));
  }
  // Freeze the drawn masks and re-run the identical masked network under
  // finite differences.
  std::vector<std::vector<Tensor>> masks = cache.dropout_masks;
  stack.backward(cache, d_top, nullptr);

  auto masked_loss = [&]() {
    std::vector<Tensor> layer_input = inputs;
    RnnState state = init;
    double loss = 0;
    std::size_t idx = 0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      Tensor x = inputs[t];
      for (std::size_t l = 0; l < stack.depth(); ++l) {
        for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] *= masks[t][l].values[i];
        Tensor h_out, c_out;
        stack.layers()[l].step_forward(x, state.h[l], state.c[l], &h_out, &c_out);
        state.h[l] = h_out;
        state.c[l] = c_out;
        x = h_out;
      }
      for (Real v : x.values) loss += static_cast<double>(v) * probe.values[idx++ % probe.numel()];
    }
    return loss;
  };
  for (const ParamPtr& p : stack.params()) {
    CHECK(max_rel_error(finite_difference(&p->value.values, masked_loss), p->grad.values) < 1e-4);
  }
}

TEST_CASE("zero output gradients produce zero parameter gradients") {
  Rng rng(47);
  RnnStack stack("s", 2, 3, 4, 0.0);
  randomize_stack(stack, rng);
  std::vector<Tensor> inputs(3, Tensor({1, 3}));
  for (Tensor& t : inputs) fill_uniform(t, rng, -1, 1);
  StackCache cache;
  stack.forward(inputs, RnnState::zeros(2, 1, 4), false, nullptr, nullptr, &cache);
  std::vector<Tensor> d_top(3, Tensor({1, 4}));
  stack.backward(cache, d_top, nullptr);
  for (const ParamPtr& p : stack.params()) {
    for (Real g : p->grad.values) CHECK(g == Real(0));
  }
}

TEST_CASE("backward without a forward cache raises a state error") {
  RnnStack stack("s", 1, 2, 3, 0.0);
  StackCache cache;  // never filled by a forward pass
  CHECK_THROWS_AS(stack.backward(cache, {}, nullptr), StateError);
}

TEST_CASE("backward cannot be replayed on a consumed cache") {
  Rng rng(53);
  RnnStack stack("s", 1, 2, 3, 0.0);
  randomize_stack(stack, rng);
  std::vector<Tensor> inputs(2, Tensor({1, 2}));
  for (Tensor& t : inputs) fill_uniform(t, rng, -1, 1);
  StackCache cache;
  stack.forward(inputs, RnnState::zeros(1, 1, 3), false, nullptr, nullptr, &cache);
  std::vector<Tensor> d_top(2, Tensor({1, 3}));
  stack.backward(cache, d_top, nullptr);
  CHECK_THROWS_AS(stack.backward(cache, d_top, nullptr), StateError);
}

TEST_CASE("stacking is causal: later inputs cannot affect earlier outputs") {
  Rng rng(59);
  RnnStack stack("s", 2, 3, 4, 0.0);
  randomize_stack(stack, rng);
  std::vector<Tensor> inputs(4, Tensor({1, 3}));
  for (Tensor& t : inputs) fill_uniform(t, rng, -1, 1);
  RnnState init = RnnState::zeros(2, 1, 4);
  std::vector<Tensor> base = stack.forward(inputs, init, false, nullptr, nullptr, nullptr);

  inputs[2].values[0] += Real(1);  // perturb step 2 only
  std::vector<Tensor> perturbed = stack.forward(inputs, init, false, nullptr, nullptr, nullptr);
  CHECK(perturbed[0] == base[0]);
  CHECK(perturbed[1] == base[1]);
  CHECK(perturbed[2] != base[2]);
}

TEST_CASE("masked steps carry state so padded batches equal per-example runs") {
  Rng rng(61);
  RnnStack stack("s", 2, 3, 4, 0.0);
  randomize_stack(stack, rng);

  // Row 0 has 4 real steps, row 1 has 2 real steps then padding.
  std::vector<Tensor> batch_inputs(4, Tensor({2, 3}));
  std::vector<Tensor> row0(4, Tensor({1, 3})), row1(2, Tensor({1, 3}));
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t k = 0; k < 3; ++k) {
      const Real a = static_cast<Real>(rng.uniform(-1, 1));
      const Real b = static_cast<Real>(rng.uniform(-1, 1));
      batch_inputs[t].at(0, k) = a;
      batch_inputs[t].at(1, k) = b;
      row0[t].at(0, k) = a;
      if (t < 2) row1[t].at(0, k) = b;
    }
  }
  std::vector<std::vector<std::uint8_t>> masks{{1, 1}, {1, 1}, {1, 0}, {1, 0}};

  RnnState batch_final;
  stack.forward(batch_inputs, RnnState::zeros(2, 2, 4), false, nullptr, &batch_final, nullptr,
                masks);
  RnnState final0, final1;
  stack.forward(row0, RnnState::zeros(2, 1, 4), false, nullptr, &final0, nullptr);
  stack.forward(row1, RnnState::zeros(2, 1, 4), false, nullptr, &final1, nullptr);

  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(batch_final.h[l].at(0, j) == doctest::Approx(final0.h[l].at(0, j)).epsilon(1e-12));
      CHECK(batch_final.h[l].at(1, j) == doctest::Approx(final1.h[l].at(0, j)).epsilon(1e-12));
      CHECK(batch_final.c[l].at(0, j) == doctest::Approx(final0.c[l].at(0, j)).epsilon(1e-12));
      CHECK(batch_final.c[l].at(1, j) == doctest::Approx(final1.c[l].at(0, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward and backward stay finite for entries up to magnitude 10") {
  Rng rng(71);
  RnnStack stack("s", 2, 3, 4, 0.0);
  for (const ParamPtr& p : stack.params()) init_uniform(*p, -10, 10, rng);
  std::vector<Tensor> inputs(4, Tensor({2, 3}));
  for (Tensor& t : inputs) fill_uniform(t, rng, -10, 10);

  StackCache cache;
  RnnState final_state;
  std::vector<Tensor> top =
      stack.forward(inputs, RnnState::zeros(2, 2, 4), false, nullptr, &final_state, &cache);
  for (const Tensor& h : top) CHECK(h.all_finite());
  for (const Tensor& h : final_state.h) CHECK(h.all_finite());
  for (const Tensor& c : final_state.c) CHECK(c.all_finite());

  std::vector<Tensor> d_top(4, Tensor({2, 4}));
  for (Tensor& t : d_top) fill_uniform(t, rng, -10, 10);
  StackBackwardResult back = stack.backward(cache, d_top, nullptr);
  for (const ParamPtr& p : stack.params()) CHECK(p->grad.all_finite());
  for (const Tensor& d : back.d_inputs) CHECK(d.all_finite());
}

TEST_CASE("embedding scatter-adds gradients only into looked-up rows") {
  Embedding embed("e", 6, 3);
  Rng rng(67);
  init_uniform(*embed.table(), -1, 1, rng);
  const std::int32_t ids[3] = {1, 4, 1};
  Tensor out = embed.lookup(ids);
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(out.at(0, k) == embed.table()->value.at(1, k));
    CHECK(out.at(2, k) == embed.table()->value.at(1, k));
  }

  Tensor d_out({3, 3});
  d_out.fill(Real(1));
  embed.backward(ids, d_out);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t k = 0; k < 3; ++k) {
      const Real expected = r == 1 ? Real(2) : (r == 4 ? Real(1) : Real(0));
      CHECK(embed.table()->grad.at(r, k) == expected);
    }
  }
  CHECK_THROWS_AS(embed.lookup(std::vector<std::int32_t>{7}), IndexError);
}
