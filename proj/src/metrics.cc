#include "mtseq/metrics.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "mtseq/corpus.h"
#include "mtseq/error.h"

namespace mtseq {

double perplexity(double nll_sum, std::uint64_t token_count) {
  if (token_count == 0) {
    throw MetricError("perplexity undefined over zero tokens");
  }
  return std::exp(nll_sum / static_cast<double>(token_count));
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::uint64_t>;

NgramCounts count_ngrams(const std::vector<std::string>& sentence, std::size_t n) {
  NgramCounts counts;
  if (sentence.size() < n) return counts;
  for (std::size_t i = 0; i + n <= sentence.size(); ++i) {
    std::vector<std::string> gram(sentence.begin() + i, sentence.begin() + i + n);
    ++counts[std::move(gram)];
  }
  return counts;
}

}  // namespace

BleuStats corpus_bleu_stats(const TokenCorpus& hypotheses, const TokenCorpus& references,
                            std::size_t max_n, bool smooth) {
  if (hypotheses.size() != references.size()) {
    throw ConfigError("BLEU requires one reference per hypothesis (" +
                      std::to_string(hypotheses.size()) + " vs " +
                      std::to_string(references.size()) + ")");
  }
  if (hypotheses.empty()) {
    throw MetricError("BLEU undefined on an empty corpus");
  }

  std::vector<std::uint64_t> clipped(max_n, 0), total(max_n, 0);
  BleuStats stats;
  stats.sentences = hypotheses.size();
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    stats.hyp_length += hyp.size();
    stats.ref_length += ref.size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      NgramCounts hyp_counts = count_ngrams(hyp, n);
      NgramCounts ref_counts = count_ngrams(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        total[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) {
          clipped[n - 1] += std::min<std::uint64_t>(count, it->second);
        }
      }
    }
  }

  // Orders beyond the longest sentence have no n-grams at all; they drop out
  // of the geometric mean rather than zeroing it, so BLEU(h,h) is 100 for
  // any corpus.
  stats.precisions.resize(max_n);
  double log_precision = 0.0;
  std::size_t supported = 0;
  bool zero_precision = false;
  for (std::size_t n = 0; n < max_n; ++n) {
    std::uint64_t num = clipped[n], den = total[n];
    if (smooth && n >= 1 && den > 0) {
      num += 1;
      den += 1;
    }
    stats.precisions[n] = den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    if (den == 0) continue;
    ++supported;
    if (stats.precisions[n] <= 0.0) {
      zero_precision = true;
    } else {
      log_precision += std::log(stats.precisions[n]);
    }
  }

  if (stats.hyp_length > 0) {
    const double ratio =
        1.0 - static_cast<double>(stats.ref_length) / static_cast<double>(stats.hyp_length);
    stats.brevity_penalty = std::exp(std::min(0.0, ratio));
  } else {
    stats.brevity_penalty = 0.0;
  }

  if (zero_precision || supported == 0 || stats.hyp_length == 0) {
    stats.bleu = 0.0;
  } else {
    stats.bleu = 100.0 * stats.brevity_penalty *
                 std::exp(log_precision / static_cast<double>(supported));
  }
  return stats;
}

double corpus_bleu(const TokenCorpus& hypotheses, const TokenCorpus& references, std::size_t max_n,
                   bool smooth) {
  return corpus_bleu_stats(hypotheses, references, max_n, smooth).bleu;
}

F1Stats f1_from_spans(const std::vector<std::vector<LabeledSpan>>& predicted,
                      const std::vector<std::vector<LabeledSpan>>& gold) {
  if (predicted.size() != gold.size()) {
    throw ConfigError("span F1 requires aligned corpora (" + std::to_string(predicted.size()) +
                      " vs " + std::to_string(gold.size()) + ")");
  }
  F1Stats stats;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    std::map<LabeledSpan, std::uint64_t> gold_counts;
    for (const LabeledSpan& span : gold[s]) ++gold_counts[span];
    stats.gold += gold[s].size();
    stats.predicted += predicted[s].size();
    for (const LabeledSpan& span : predicted[s]) {
      auto it = gold_counts.find(span);
      if (it != gold_counts.end() && it->second > 0) {
        --it->second;
        ++stats.matched;
      }
    }
  }
  stats.precision = stats.predicted == 0
                        ? 0.0
                        : static_cast<double>(stats.matched) / static_cast<double>(stats.predicted);
  stats.recall =
      stats.gold == 0 ? 0.0 : static_cast<double>(stats.matched) / static_cast<double>(stats.gold);
  stats.f1 = (stats.precision + stats.recall) == 0.0
                 ? 0.0
                 : 100.0 * 2.0 * stats.precision * stats.recall / (stats.precision + stats.recall);
  return stats;
}

F1Stats bracket_f1_stats(const std::vector<std::vector<std::string>>& predicted_tags,
                         const std::vector<ParseTree>& gold_trees, const SpanOptions& opts) {
  if (predicted_tags.size() != gold_trees.size()) {
    throw ConfigError("bracket F1 requires aligned corpora (" +
                      std::to_string(predicted_tags.size()) + " vs " +
                      std::to_string(gold_trees.size()) + ")");
  }
  std::vector<std::vector<LabeledSpan>> predicted, gold;
  predicted.reserve(predicted_tags.size());
  gold.reserve(gold_trees.size());
  RepairStats repairs;
  for (std::size_t s = 0; s < predicted_tags.size(); ++s) {
    ParseTree tree = delinearize(predicted_tags[s], &repairs);
    predicted.push_back(extract_spans(tree, opts));
    // Predictions only ever convey the nonterminal skeleton, so gold spans
    // are taken in the same skeleton-leaf coordinates.
    gold.push_back(extract_spans(skeleton_of(gold_trees[s]), opts));
  }
  F1Stats stats = f1_from_spans(predicted, gold);
  stats.repairs = repairs.total();
  return stats;
}

double bracket_f1(const std::vector<std::vector<std::string>>& predicted_tags,
                  const std::vector<ParseTree>& gold_trees, const SpanOptions& opts) {
  return bracket_f1_stats(predicted_tags, gold_trees, opts).f1;
}

MetricReport bleu_report_from_files(const std::string& hypotheses_path,
                                    const std::string& references_path, std::size_t max_n,
                                    bool smooth) {
  BleuStats stats = corpus_bleu_stats(read_token_lines(hypotheses_path),
                                      read_token_lines(references_path), max_n, smooth);
  return {"bleu",
          stats.bleu,
          {{"sentences", stats.sentences},
           {"hyp_tokens", stats.hyp_length},
           {"ref_tokens", stats.ref_length}}};
}

MetricReport f1_report_from_files(const std::string& hypotheses_path,
                                  const std::string& reference_trees_path,
                                  const SpanOptions& opts) {
  F1Stats stats = bracket_f1_stats(read_token_lines(hypotheses_path),
                                   read_tree_lines(reference_trees_path), opts);
  return {"f1",
          stats.f1,
          {{"gold_brackets", stats.gold},
           {"predicted_brackets", stats.predicted},
           {"matched_brackets", stats.matched},
           {"repairs", stats.repairs}}};
}

}  // namespace mtseq
