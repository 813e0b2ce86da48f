#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtseq/parse_tree.h"

namespace mtseq {

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::map<std::string, std::uint64_t> support;  // tokens / sentences / brackets
};

// exp(nll_sum / token_count).
double perplexity(double nll_sum, std::uint64_t token_count);

using TokenCorpus = std::vector<std::vector<std::string>>;

struct BleuStats {
  double bleu = 0.0;  // 0..100
  double brevity_penalty = 1.0;
  std::vector<double> precisions;  // clipped modified n-gram precisions
  std::uint64_t hyp_length = 0;
  std::uint64_t ref_length = 0;
  std::uint64_t sentences = 0;
};

// Corpus BLEU on the 0-100 scale: geometric mean of clipped modified n-gram
// precisions (n = 1..max_n) times exp(min(0, 1 - ref_len/hyp_len)).
// Unsmoothed by default (any zero precision gives 0); smooth adds one to
// numerator and denominator for n >= 2.
BleuStats corpus_bleu_stats(const TokenCorpus& hypotheses, const TokenCorpus& references,
                            std::size_t max_n = 4, bool smooth = false);
double corpus_bleu(const TokenCorpus& hypotheses, const TokenCorpus& references,
                   std::size_t max_n = 4, bool smooth = false);

struct F1Stats {
  double f1 = 0.0;  // 0..100
  double precision = 0.0;
  double recall = 0.0;
  std::uint64_t matched = 0;
  std::uint64_t predicted = 0;
  std::uint64_t gold = 0;
  std::uint64_t repairs = 0;  // repaired tokens across malformed predictions
};

// F1 over corpus-aggregated labeled-span multisets.
F1Stats f1_from_spans(const std::vector<std::vector<LabeledSpan>>& predicted,
                      const std::vector<std::vector<LabeledSpan>>& gold);

// Delinearizes predictions (repairing malformed output), extracts labeled
// spans from both sides and scores the aggregated multisets.
F1Stats bracket_f1_stats(const std::vector<std::vector<std::string>>& predicted_tags,
                         const std::vector<ParseTree>& gold_trees, const SpanOptions& opts = {});
double bracket_f1(const std::vector<std::vector<std::string>>& predicted_tags,
                  const std::vector<ParseTree>& gold_trees, const SpanOptions& opts = {});

// File-based scoring; one hypothesis sentence per line. BLEU references are
// token lines, F1 references are bracketed trees.
MetricReport bleu_report_from_files(const std::string& hypotheses_path,
                                    const std::string& references_path, std::size_t max_n = 4,
                                    bool smooth = false);
MetricReport f1_report_from_files(const std::string& hypotheses_path,
                                  const std::string& reference_trees_path,
                                  const SpanOptions& opts = {});

}  // namespace mtseq
