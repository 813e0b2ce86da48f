#include "mtseq/parse_tree.h"

#include <algorithm>

#include "mtseq/error.h"

namespace mtseq {

bool ParseTree::skeleton_equal(const ParseTree& other) const {
  if (is_terminal() != other.is_terminal()) return false;
  if (is_terminal()) return true;  // words are not part of the skeleton
  if (label != other.label) return false;
  // Terminal children are invisible to the skeleton.
  std::vector<const ParseTree*> a, b;
  for (const ParseTree& c : children) {
    if (!c.is_terminal()) a.push_back(&c);
  }
  for (const ParseTree& c : other.children) {
    if (!c.is_terminal()) b.push_back(&c);
  }
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i]->skeleton_equal(*b[i])) return false;
  }
  return true;
}

namespace {

void skip_space(const std::string& s, std::size_t& pos) {
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
}

std::string read_symbol(const std::string& s, std::size_t& pos) {
  const std::size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos])) && s[pos] != '(' &&
         s[pos] != ')') {
    ++pos;
  }
  return s.substr(start, pos - start);
}

ParseTree parse_node(const std::string& s, std::size_t& pos) {
  if (pos >= s.size() || s[pos] != '(') {
    throw TreeParseError("expected '('", pos);
  }
  ++pos;
  skip_space(s, pos);
  std::string label = read_symbol(s, pos);
  if (label.empty()) {
    throw TreeParseError("missing node label", pos);
  }
  ParseTree node;
  node.label = std::move(label);
  skip_space(s, pos);
  while (pos < s.size() && s[pos] != ')') {
    if (s[pos] == '(') {
      node.children.push_back(parse_node(s, pos));
    } else {
      std::string word = read_symbol(s, pos);
      if (word.empty()) {
        throw TreeParseError("unexpected character", pos);
      }
      ParseTree leaf;
      leaf.word = std::move(word);
      node.children.push_back(std::move(leaf));
    }
    skip_space(s, pos);
  }
  if (pos >= s.size()) {
    throw TreeParseError("unbalanced tree: missing ')'", pos);
  }
  ++pos;  // consume ')'
  return node;
}

}  // namespace

ParseTree parse_bracketed(const std::string& text) {
  std::size_t pos = 0;
  skip_space(text, pos);
  ParseTree root = parse_node(text, pos);
  skip_space(text, pos);
  if (pos != text.size()) {
    throw TreeParseError("trailing content after tree", pos);
  }
  return root;
}

namespace {

void linearize_into(const ParseTree& node, std::vector<std::string>& out) {
  if (node.is_terminal()) return;
  if (!node.label.empty()) out.push_back("(" + node.label);
  for (const ParseTree& c : node.children) linearize_into(c, out);
  if (!node.label.empty()) out.push_back(")" + node.label);
}

}  // namespace

std::vector<std::string> linearize(const ParseTree& tree) {
  std::vector<std::string> out;
  linearize_into(tree, out);
  return out;
}

ParseTree delinearize(std::span<const std::string> tags, RepairStats* repairs) {
  RepairStats local;
  std::vector<ParseTree> stack;
  std::vector<ParseTree> roots;
  auto close_top = [&]() {
    ParseTree done = std::move(stack.back());
    stack.pop_back();
    if (stack.empty()) {
      roots.push_back(std::move(done));
    } else {
      stack.back().children.push_back(std::move(done));
    }
  };

  for (const std::string& tag : tags) {
    if (tag.size() >= 2 && tag[0] == '(') {
      ParseTree node;
      node.label = tag.substr(1);
      stack.push_back(std::move(node));
    } else if (tag.size() >= 2 && tag[0] == ')') {
      const std::string label = tag.substr(1);
      if (!stack.empty() && stack.back().label == label) {
        close_top();
      } else {
        ++local.dropped_closers;
      }
    } else {
      // Not a bracket token at all; treat like an unmatched closer.
      ++local.dropped_closers;
    }
  }
  while (!stack.empty()) {
    ++local.auto_closed;
    close_top();
  }

  ParseTree result;
  if (roots.size() == 1) {
    result = std::move(roots.front());
  } else if (!roots.empty()) {
    ++local.wrapped_forest;
    result.children = std::move(roots);  // unlabeled wrapper
  }
  if (repairs != nullptr) {
    repairs->dropped_closers += local.dropped_closers;
    repairs->auto_closed += local.auto_closed;
    repairs->wrapped_forest += local.wrapped_forest;
  }
  return result;
}

ParseTree skeleton_of(const ParseTree& tree) {
  ParseTree out;
  out.label = tree.label;
  for (const ParseTree& c : tree.children) {
    if (!c.is_terminal()) out.children.push_back(skeleton_of(c));
  }
  return out;
}

namespace {

// Returns the number of leaf positions this node covers.
std::size_t collect_spans(const ParseTree& node, std::size_t begin, bool is_root,
                          const SpanOptions& opts, std::vector<LabeledSpan>& out) {
  if (node.is_terminal()) return 1;
  std::size_t width = 0;
  if (node.children.empty()) {
    width = 1;
  } else {
    for (const ParseTree& c : node.children) {
      width += collect_spans(c, begin + width, false, opts, out);
    }
  }
  const bool excluded =
      node.label.empty() || (is_root && !opts.include_root) ||
      std::find(opts.excluded_labels.begin(), opts.excluded_labels.end(), node.label) !=
          opts.excluded_labels.end();
  if (!excluded) {
    out.push_back({node.label, begin, begin + width});
  }
  return width;
}

}  // namespace

std::vector<LabeledSpan> extract_spans(const ParseTree& tree, const SpanOptions& opts) {
  std::vector<LabeledSpan> out;
  if (tree.is_terminal() && tree.word.empty() && tree.children.empty()) {
    return out;  // empty tree from an all-dropped sequence
  }
  collect_spans(tree, 0, true, opts, out);
  return out;
}

}  // namespace mtseq
