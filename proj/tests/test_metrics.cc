#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mtseq/error.h"
#include "mtseq/metrics.h"
#include "oracles.h"

using namespace mtseq;
using namespace mtseq::testing;

namespace {

TokenCorpus sentences(std::initializer_list<const char*> lines) {
  TokenCorpus corpus;
  for (const char* line : lines) {
    std::vector<std::string> tokens;
    std::string word;
    for (const char* p = line;; ++p) {
      if (*p == ' ' || *p == '\0') {
        if (!word.empty()) tokens.push_back(word);
        word.clear();
        if (*p == '\0') break;
      } else {
        word.push_back(*p);
      }
    }
    corpus.push_back(std::move(tokens));
  }
  return corpus;
}

}  // namespace

TEST_CASE("perplexity basics") {
  CHECK(perplexity(std::log(104.0) * 10, 10) == doctest::Approx(104.0).epsilon(1e-12));
  CHECK(perplexity(0.0, 5) == 1.0);
  CHECK(perplexity(std::log(8.0) * 10, 10) == doctest::Approx(8.0).epsilon(1e-12));
  CHECK_THROWS_AS(perplexity(1.0, 0), MetricError);
}

TEST_CASE("bleu of a corpus against itself is exactly 100") {
  TokenCorpus corpus = sentences({"the cat sat on the mat", "a b c d e", "x"});
  CHECK(corpus_bleu(corpus, corpus) == 100.0);

  // Orders with no n-grams anywhere drop out instead of zeroing the score.
  TokenCorpus shorts = sentences({"a b", "c"});
  CHECK(corpus_bleu(shorts, shorts) == 100.0);
}

TEST_CASE("clipping caps repeated unigrams at the reference count") {
  TokenCorpus hyp = sentences({"the the the the"});

  // Hand count: min(4, 1) / 4 against a reference with one "the" ...
  BleuStats one = corpus_bleu_stats(hyp, sentences({"the cat"}));
  CHECK(one.precisions[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(one.bleu == 0.0);  // higher-order precisions are zero, unsmoothed

  // ... and min(4, 2) / 4 when the reference carries "the" twice.
  BleuStats two = corpus_bleu_stats(hyp, sentences({"the cat the"}));
  CHECK(two.precisions[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("brevity penalty matches the closed form") {
  TokenCorpus hyp = sentences({"a b c d"});
  TokenCorpus ref = sentences({"a b c d e"});
  BleuStats stats = corpus_bleu_stats(hyp, ref);
  const double expected_bp = std::exp(1.0 - 5.0 / 4.0);
  CHECK(stats.brevity_penalty == doctest::Approx(expected_bp).epsilon(1e-12));
  for (double p : stats.precisions) CHECK(p == 1.0);
  CHECK(stats.bleu == doctest::Approx(100.0 * expected_bp).epsilon(1e-9));
}

TEST_CASE("bleu is invariant under sentence permutation") {
  TokenCorpus hyp = sentences({"a b c", "d e f g", "h h i"});
  TokenCorpus ref = sentences({"a b x", "d e f q", "h i i"});
  const double base = corpus_bleu(hyp, ref, 4, true);
  TokenCorpus hyp_perm{hyp[2], hyp[0], hyp[1]};
  TokenCorpus ref_perm{ref[2], ref[0], ref[1]};
  CHECK(corpus_bleu(hyp_perm, ref_perm, 4, true) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("appending a fully matched pair never lowers bleu when BP is 1") {
  TokenCorpus hyp = sentences({"a b c d e"});
  TokenCorpus ref = sentences({"a b c d f"});
  const double before = corpus_bleu(hyp, ref);
  hyp.push_back(sentences({"g h i j k l"})[0]);
  ref.push_back(sentences({"g h i j k l"})[0]);
  CHECK(corpus_bleu(hyp, ref) >= before);
}

TEST_CASE("unsmoothed bleu is zero when any order has no match") {
  TokenCorpus hyp = sentences({"a b"});
  TokenCorpus ref = sentences({"a c"});
  CHECK(corpus_bleu(hyp, ref) == 0.0);
  CHECK(corpus_bleu(hyp, ref, 4, true) > 0.0);
}

TEST_CASE("bleu input validation") {
  TokenCorpus hyp = sentences({"a"});
  TokenCorpus refs = sentences({"a", "b"});
  CHECK_THROWS_AS(corpus_bleu(hyp, refs), ConfigError);
  CHECK_THROWS_AS(corpus_bleu({}, {}), MetricError);
}

TEST_CASE("span f1 hand case scores exactly 50") {
  std::vector<std::vector<LabeledSpan>> predicted{{{"S", 0, 2}, {"VP", 1, 2}}};
  std::vector<std::vector<LabeledSpan>> gold{{{"S", 0, 2}, {"NP", 0, 1}}};
  F1Stats stats = f1_from_spans(predicted, gold);
  CHECK(stats.precision == 0.5);
  CHECK(stats.recall == 0.5);
  CHECK(stats.f1 == 50.0);
}

TEST_CASE("bracket f1 of gold against itself is 100") {
  std::vector<ParseTree> gold{parse_bracketed("(S (NP a) (VP b (PP c)))"),
                              parse_bracketed("(S (NP x y))")};
  std::vector<std::vector<std::string>> predicted;
  for (const ParseTree& t : gold) predicted.push_back(linearize(t));
  F1Stats stats = bracket_f1_stats(predicted, gold);
  CHECK(stats.f1 == 100.0);
  CHECK(stats.repairs == 0);
}

TEST_CASE("bracket f1 with zero matching spans is 0") {
  std::vector<ParseTree> gold{parse_bracketed("(S (NP a) (VP b))")};
  std::vector<std::vector<std::string>> predicted{{"(X", ")X"}};
  CHECK(bracket_f1(predicted, gold) == 0.0);
}

TEST_CASE("bracket f1 repairs malformed predictions instead of crashing") {
  std::vector<ParseTree> gold{parse_bracketed("(S (NP a) (VP b))")};
  std::vector<std::vector<std::string>> predicted{{"(S", "(NP", ")NP", "(VP", ")VP"}};  // missing )S
  F1Stats stats = bracket_f1_stats(predicted, gold);
  CHECK(stats.repairs == 1);
  CHECK(stats.f1 == 100.0);  // repair closes S at the end, recovering the skeleton
}

TEST_CASE("duplicate spans match as a multiset, not a set") {
  std::vector<std::vector<LabeledSpan>> predicted{{{"NP", 0, 1}, {"NP", 0, 1}}};
  std::vector<std::vector<LabeledSpan>> gold{{{"NP", 0, 1}}};
  F1Stats stats = f1_from_spans(predicted, gold);
  CHECK(stats.matched == 1);
  CHECK(stats.predicted == 2);
}
