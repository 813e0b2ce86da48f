#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mtseq {

// Constituency tree node. Terminal leaves carry a word and no label;
// nonterminals carry a label and children. A childless nonterminal is a
// skeleton leaf (the shape produced by delinearizing tag sequences, which
// drop terminals).
struct ParseTree {
  std::string label;
  std::string word;
  std::vector<ParseTree> children;

  bool is_terminal() const { return label.empty() && children.empty(); }
  bool skeleton_equal(const ParseTree& other) const;
};

// Parses "(S (NP a) (VP b))". Throws TreeParseError naming the offending
// character position on unbalanced or malformed input.
ParseTree parse_bracketed(const std::string& text);

// Depth-first bracket-token encoding: "(L" on entering nonterminal L, ")L"
// on leaving; terminal words are dropped.
std::vector<std::string> linearize(const ParseTree& tree);

struct RepairStats {
  std::uint64_t dropped_closers = 0;
  std::uint64_t auto_closed = 0;
  std::uint64_t wrapped_forest = 0;

  std::uint64_t total() const { return dropped_closers + auto_closed + wrapped_forest; }
};

// Inverse of linearize on well-formed input. Malformed sequences are
// repaired instead of rejected: closers that do not match the innermost open
// label are dropped, openers still unclosed at the end are closed there, and
// multiple roots are wrapped under an unlabeled node (excluded from spans).
ParseTree delinearize(std::span<const std::string> tags, RepairStats* repairs = nullptr);

// The tree with every terminal stripped, i.e. what a linearize/delinearize
// round trip preserves. Bracket F1 compares predictions and gold in these
// skeleton-leaf coordinates.
ParseTree skeleton_of(const ParseTree& tree);

struct LabeledSpan {
  std::string label;
  std::size_t begin = 0;
  std::size_t end = 0;

  auto operator<=>(const LabeledSpan&) const = default;
};

struct SpanOptions {
  bool include_root = true;
  std::vector<std::string> excluded_labels;
};

// Labeled spans over leaf positions: a terminal occupies one position, as
// does a childless nonterminal. Unlabeled nodes produce no span.
std::vector<LabeledSpan> extract_spans(const ParseTree& tree, const SpanOptions& opts = {});

}  // namespace mtseq
