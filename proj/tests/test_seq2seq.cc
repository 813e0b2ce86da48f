#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtseq/error.h"
#include "mtseq/optim.h"
#include "mtseq/seq2seq.h"
#include "oracles.h"

using namespace mtseq;
using namespace mtseq::testing;

namespace {

void randomize(std::span<const ParamPtr> params, Rng& rng, double scale = 0.25) {
  for (const ParamPtr& p : params) {
    init_uniform(*p, static_cast<Real>(-scale), static_cast<Real>(scale), rng);
  }
}

Batch batch_from(std::vector<std::vector<std::int32_t>> sources,
                 std::vector<std::vector<std::int32_t>> targets) {
  std::vector<ExamplePair> pairs(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    pairs[i].source = std::move(sources[i]);
    pairs[i].target = std::move(targets[i]);
  }
  return assemble_batch(pairs);
}

}  // namespace

TEST_CASE("encode rejects unreversed and empty sources") {
  Rng rng(301);
  SequenceEncoder enc("e", 10, 4, 1, 5, 0.0);
  randomize(enc.params(), rng);

  Batch batch = batch_from({{4, 5, 6}}, {{4}});
  Batch tampered = batch;
  tampered.source_reversed = false;
  CHECK_THROWS_AS(enc.encode(tampered, false, nullptr, nullptr), InputError);

  Batch empty = batch;
  empty.source = IdMatrix(1, 0, Vocabulary::kPad);
  CHECK_THROWS_AS(enc.encode(empty, false, nullptr, nullptr), InputError);
}

TEST_CASE("the encoder consumes the source in reverse order") {
  Rng rng(303);
  SequenceEncoder enc("e", 10, 4, 2, 5, 0.0);
  randomize(enc.params(), rng);

  Batch batch = batch_from({{4, 5, 6}}, {{4}});  // "a b c"
  EncoderState state = enc.encode(batch, false, nullptr, nullptr);

  // Feed the stack by hand in the order c, b, a.
  std::vector<Tensor> inputs;
  for (std::int32_t id : {6, 5, 4}) {
    const std::int32_t ids[1] = {id};
    inputs.push_back(enc.embedding().lookup(ids));
  }
  RnnState manual_final;
  enc.stack().forward(inputs, RnnState::zeros(2, 1, 5), false, nullptr, &manual_final, nullptr);
  CHECK(state == manual_final);
}

TEST_CASE("reversal of a length-1 source is the identity") {
  Batch batch = batch_from({{7}}, {{4}});
  CHECK(batch.source.at(0, 0) == 7);
  CHECK(batch.source_reversed);
}

TEST_CASE("identical sources in one batch produce identical state rows") {
  Rng rng(305);
  SequenceEncoder enc("e", 10, 4, 2, 5, 0.0);
  randomize(enc.params(), rng);
  Batch batch = batch_from({{4, 8, 5}, {4, 8, 5}}, {{4}, {5, 6}});
  EncoderState state = enc.encode(batch, false, nullptr, nullptr);
  for (std::size_t l = 0; l < state.depth(); ++l) {
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(state.h[l].at(0, j) == state.h[l].at(1, j));
      CHECK(state.c[l].at(0, j) == state.c[l].at(1, j));
    }
  }
}

TEST_CASE("an untrained zero-weight model scores ln V per token") {
  SequenceEncoder enc("e", 50, 4, 1, 5, 0.0);  // all-zero weights
  Decoder dec("d", 50, 4, 1, 5, 0.0);
  Batch batch = batch_from({{4, 5}}, {{6, 7, 8}});
  EncoderState state = enc.encode(batch, false, nullptr, nullptr);
  NllResult res = dec.teacher_forced_nll(state, batch, false, nullptr, nullptr);
  CHECK(res.token_count == 4);  // three tokens plus </s>
  CHECK(res.nll_sum / res.token_count == doctest::Approx(std::log(50.0)).epsilon(1e-12));
}

TEST_CASE("batch nll equals the sum of per-example nlls") {
  Rng rng(307);
  SequenceEncoder enc("e", 12, 5, 2, 6, 0.0);
  Decoder dec("d", 12, 5, 2, 6, 0.0);
  randomize(enc.params(), rng);
  randomize(dec.params(), rng);

  std::vector<std::vector<std::int32_t>> sources{{4, 5, 6, 7}, {8, 9}};
  std::vector<std::vector<std::int32_t>> targets{{10, 11}, {4, 5, 6}};

  Batch joint = batch_from(sources, targets);
  EncoderState state = enc.encode(joint, false, nullptr, nullptr);
  NllResult joint_res = dec.teacher_forced_nll(state, joint, false, nullptr, nullptr);

  double single_sum = 0.0;
  std::size_t single_tokens = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    Batch one = batch_from({sources[i]}, {targets[i]});
    EncoderState s = enc.encode(one, false, nullptr, nullptr);
    NllResult r = dec.teacher_forced_nll(s, one, false, nullptr, nullptr);
    single_sum += r.nll_sum;
    single_tokens += r.token_count;
  }
  CHECK(joint_res.token_count == single_tokens);
  CHECK(std::fabs(joint_res.nll_sum - single_sum) < 1e-9);
}

TEST_CASE("per-token nll is never below zero so perplexity is at least 1") {
  Rng rng(309);
  for (int trial = 0; trial < 5; ++trial) {
    SequenceEncoder enc("e", 9, 3, 1, 4, 0.0);
    Decoder dec("d", 9, 3, 1, 4, 0.0);
    randomize(enc.params(), rng, 2.0);
    randomize(dec.params(), rng, 2.0);
    Batch batch = batch_from({{4, 5}}, {{6, 7}});
    EncoderState state = enc.encode(batch, false, nullptr, nullptr);
    NllResult res = dec.teacher_forced_nll(state, batch, false, nullptr, nullptr);
    CHECK(std::exp(res.nll_sum / res.token_count) >= 1.0);
  }
}

TEST_CASE("end-to-end gradients through encode and teacher_forced_nll match finite differences") {
  Rng rng(311);
  SequenceEncoder enc("e", 9, 4, 2, 5, 0.0);
  Decoder dec("d", 9, 4, 2, 5, 0.0);
  randomize(enc.params(), rng);
  randomize(dec.params(), rng);
  Batch batch = batch_from({{4, 5, 6}, {7, 8}}, {{5, 6}, {7, 8, 4}});

  auto loss = [&]() {
    EncoderState state = enc.encode(batch, false, nullptr, nullptr);
    return dec.teacher_forced_nll(state, batch, false, nullptr, nullptr).nll_sum;
  };

  std::unique_ptr<EncoderCache> enc_cache;
  EncoderState state = enc.encode(batch, false, nullptr, &enc_cache);
  DecoderCache dec_cache;
  dec.teacher_forced_nll(state, batch, false, nullptr, &dec_cache);
  EncoderState d_state = dec.nll_backward(dec_cache, Real(1));
  enc.backward(*enc_cache, d_state);

  for (const ParamPtr& p : enc.params()) {
    CHECK(max_rel_error(finite_difference(&p->value.values, loss), p->grad.values) < 1e-4);
  }
  for (const ParamPtr& p : dec.params()) {
    CHECK(max_rel_error(finite_difference(&p->value.values, loss), p->grad.values) < 1e-4);
  }
}

TEST_CASE("feature encoder gradients match finite differences") {
  Rng rng(313);
  FeatureEncoder enc("img", 6, 2, 5);
  Decoder dec("d", 9, 4, 2, 5, 0.0);
  randomize(enc.params(), rng);
  randomize(dec.params(), rng);

  ExamplePair ex;
  ex.feature = {0.3, -0.8, 1.2, 0.05, -0.4, 0.9};
  ex.target = {4, 5};
  const ExamplePair one[1] = {ex};
  Batch batch = assemble_batch(one);

  auto loss = [&]() {
    EncoderState state = enc.encode(batch, false, nullptr, nullptr);
    return dec.teacher_forced_nll(state, batch, false, nullptr, nullptr).nll_sum;
  };

  std::unique_ptr<EncoderCache> cache;
  EncoderState state = enc.encode(batch, false, nullptr, &cache);
  DecoderCache dec_cache;
  dec.teacher_forced_nll(state, batch, false, nullptr, &dec_cache);
  EncoderState d_state = dec.nll_backward(dec_cache, Real(1));
  enc.backward(*cache, d_state);

  for (const ParamPtr& p : enc.params()) {
    CHECK(max_rel_error(finite_difference(&p->value.values, loss), p->grad.values) < 1e-4);
  }
}

TEST_CASE("feature encoder refuses token batches and vice versa") {
  FeatureEncoder feat("img", 6, 1, 5);
  SequenceEncoder seq("e", 9, 4, 1, 5, 0.0);
  Batch tokens = batch_from({{4}}, {{5}});
  CHECK_THROWS_AS(feat.encode(tokens, false, nullptr, nullptr), ConfigError);

  ExamplePair ex;
  ex.feature = {1, 2, 3, 4, 5, 6};
  ex.target = {4};
  const ExamplePair one[1] = {ex};
  Batch features = assemble_batch(one);
  CHECK_THROWS_AS(seq.encode(features, false, nullptr, nullptr), ConfigError);
}

TEST_CASE("a model memorizing one pair drives per-token nll toward zero and decodes it back") {
  Rng rng(317);
  SequenceEncoder enc("e", 12, 8, 1, 12, 0.0);
  Decoder dec("d", 12, 8, 1, 12, 0.0);
  randomize(enc.params(), rng, 0.08);
  randomize(dec.params(), rng, 0.08);
  std::vector<ParamPtr> params = enc.params();
  for (const ParamPtr& p : dec.params()) params.push_back(p);

  // source "3 7 1" -> target "3 7 1" under ids 4..11
  Batch batch = batch_from({{7, 11, 5}}, {{7, 11, 5}});
  double nll_per_token = 0;
  for (int step = 0; step < 400; ++step) {
    std::unique_ptr<EncoderCache> enc_cache;
    EncoderState state = enc.encode(batch, true, &rng, &enc_cache);
    DecoderCache dec_cache;
    NllResult res = dec.teacher_forced_nll(state, batch, true, &rng, &dec_cache);
    nll_per_token = res.nll_sum / res.token_count;
    EncoderState d_state = dec.nll_backward(dec_cache, Real(1));
    enc.backward(*enc_cache, d_state);
    sgd_step(params, 0.5, 5.0);
  }
  CHECK(nll_per_token < 0.01);

  EncoderState state = enc.encode(batch, false, nullptr, nullptr);
  std::vector<std::int32_t> decoded = greedy_decode(state, dec, 10);
  CHECK(decoded == std::vector<std::int32_t>{7, 11, 5, Vocabulary::kEos});
}

TEST_CASE("greedy decode emits exactly one token when max_len is 1") {
  Rng rng(319);
  SequenceEncoder enc("e", 9, 4, 1, 5, 0.0);
  Decoder dec("d", 9, 4, 1, 5, 0.0);
  randomize(enc.params(), rng);
  randomize(dec.params(), rng);
  Batch batch = batch_from({{4, 5}}, {{6}});
  EncoderState state = enc.encode(batch, false, nullptr, nullptr);
  CHECK(greedy_decode(state, dec, 1).size() == 1);
}

TEST_CASE("greedy decode is deterministic and depends on the source only through the state") {
  Rng rng(321);
  SequenceEncoder enc("e", 9, 4, 2, 5, 0.0);
  Decoder dec("d", 9, 4, 2, 5, 0.0);
  randomize(enc.params(), rng);
  randomize(dec.params(), rng);
  Batch batch = batch_from({{4, 5, 6}}, {{6}});
  EncoderState state = enc.encode(batch, false, nullptr, nullptr);
  std::vector<std::int32_t> a = greedy_decode(state, dec, 8);
  std::vector<std::int32_t> b = greedy_decode(state, dec, 8);
  CHECK(a == b);

  EncoderState copy = state;  // equal state, decoupled from any source
  CHECK(greedy_decode(copy, dec, 8) == a);
}

TEST_CASE("greedy decode breaks ties toward the lowest token id") {
  Decoder dec("d", 6, 3, 1, 4, 0.0);  // zero weights: every logit is equal
  EncoderState state = RnnState::zeros(1, 1, 4);
  std::vector<std::int32_t> out = greedy_decode(state, dec, 3);
  REQUIRE(!out.empty());
  CHECK(out[0] == 0);  // token id 0 wins the all-equal tie
}

TEST_CASE("ensemble of one and ensembles of identical models reduce to greedy decode") {
  Rng rng(323);
  SequenceEncoder enc("e", 9, 4, 1, 5, 0.0);
  Decoder dec("d", 9, 4, 1, 5, 0.0);
  randomize(enc.params(), rng);
  randomize(dec.params(), rng);
  Batch batch = batch_from({{4, 5}}, {{6}});
  EncoderState state = enc.encode(batch, false, nullptr, nullptr);
  std::vector<std::int32_t> greedy = greedy_decode(state, dec, 8);

  std::vector<EnsembleMember> one{{state, &dec}};
  CHECK(ensemble_greedy_decode(one, 8) == greedy);

  std::vector<EnsembleMember> three{{state, &dec}, {state, &dec}, {state, &dec}};
  CHECK(ensemble_greedy_decode(three, 8) == greedy);
}

TEST_CASE("ensemble averaging follows the more confident model") {
  // Two zero-stack decoders over a vocab with two live tokens (4 and 5):
  // logits reduce to the projection bias. Model A mildly prefers 4; model B
  // strongly prefers 5. Brute-force averaged softmax picks 5.
  Decoder a("a", 6, 3, 1, 4, 0.0), b("b", 6, 3, 1, 4, 0.0);
  for (Decoder* d : {&a, &b}) {
    for (std::size_t i = 0; i < 6; ++i) d->proj_b()->value.values[i] = Real(-50);
  }
  a.proj_b()->value.values[4] = Real(0.6);
  a.proj_b()->value.values[5] = Real(0);
  b.proj_b()->value.values[4] = Real(0);
  b.proj_b()->value.values[5] = Real(4.0);

  const double pa4 = std::exp(0.6) / (std::exp(0.6) + 1.0);
  const double pb4 = 1.0 / (1.0 + std::exp(4.0));
  REQUIRE(pa4 > 0.5);                    // A's argmax is 4
  REQUIRE(pb4 < 0.5);                    // B's argmax is 5
  REQUIRE((pa4 + pb4) / 2.0 < 0.5);      // the average follows B

  EncoderState state = RnnState::zeros(1, 1, 4);
  std::vector<EnsembleMember> members{{state, &a}, {state, &b}};
  std::vector<std::int32_t> out = ensemble_greedy_decode(members, 1);
  CHECK(out[0] == 5);
}

TEST_CASE("ensemble rejects decoders with mismatched vocabularies") {
  Decoder a("a", 6, 3, 1, 4, 0.0), b("b", 7, 3, 1, 4, 0.0);
  EncoderState state = RnnState::zeros(1, 1, 4);
  std::vector<EnsembleMember> members{{state, &a}, {state, &b}};
  CHECK_THROWS_AS(ensemble_greedy_decode(members, 4), ConfigError);
}

TEST_CASE("decoder depth must match the encoder state depth") {
  SequenceEncoder enc("e", 9, 4, 1, 5, 0.0);
  Decoder dec("d", 9, 4, 2, 5, 0.0);
  Batch batch = batch_from({{4}}, {{5}});
  EncoderState state = enc.encode(batch, false, nullptr, nullptr);
  CHECK_THROWS_AS(dec.teacher_forced_nll(state, batch, false, nullptr, nullptr), DimensionError);
}
