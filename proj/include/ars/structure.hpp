#ifndef ARS_STRUCTURE_HPP
#define ARS_STRUCTURE_HPP

// Constituency structures from target-side attention: binarized argmax
// matrices, the recursive split into binary trees, the right-branching
// baseline, bracketed-tree I/O, and PARSEVAL span scoring.

#include <cctype>
#include <memory>
#include <set>

#include "ars/inference.hpp"

namespace ars {

using SpanSet = std::set<std::pair<int, int>>;  // end-exclusive

// Binary tree over word-index spans: a leaf holds a contiguous span, a
// node has exactly two children whose spans concatenate to the parent's.
struct BinaryTree {
  int start = 0, end = 0;
  std::shared_ptr<BinaryTree> left, right;
  bool leaf() const { return !left; }
};
using TreePtr = std::shared_ptr<BinaryTree>;

inline void collect_spans(const BinaryTree& t, SpanSet& out,
                          bool exclude_singletons) {
  if (!exclude_singletons || t.end - t.start > 1) out.insert({t.start, t.end});
  if (t.left) collect_spans(*t.left, out, exclude_singletons);
  if (t.right) collect_spans(*t.right, out, exclude_singletons);
}
inline SpanSet tree_spans(const BinaryTree& t, bool exclude_singletons = true) {
  SpanSet s;
  collect_spans(t, s, exclude_singletons);
  return s;
}

// N x N 0/1 matrix; entry (t,i)=1 iff word i received maximal target-side
// attention when predicting word t. Strictly lower-triangular, at most one
// 1 per row.
struct BinaryAttentionMatrix {
  int n = 0;
  std::vector<int> argmax;  // per row: attended column, or -1

  bool column_nonzero(int col, int row_lo, int row_hi) const {
    for (int r = row_lo; r < row_hi; ++r)
      if (argmax[r] == col) return true;
    return false;
  }
  void validate() const {
    if (static_cast<int>(argmax.size()) != n)
      throw ContractError("attention matrix: bad row count");
    for (int r = 0; r < n; ++r)
      if (argmax[r] >= r)
        throw ContractError("attention matrix: not strictly lower-triangular");
  }
};

// Argmax per prediction over previous words, BOS excluded; ties break
// toward the most recent position.
inline BinaryAttentionMatrix binarize_attention(const AttentionTrace& trace,
                                                int n_words = -1) {
  if (trace.target.empty())
    throw ContractError("binarize_attention: trace has no target attention");
  const int n = n_words >= 0 ? n_words : static_cast<int>(trace.target.size());
  BinaryAttentionMatrix A;
  A.n = n;
  A.argmax.assign(n, -1);
  for (int w = 0; w < n; ++w) {
    const auto& row = trace.target[w];  // step t = w+1, slots 0..t with BOS at 0
    const int t = static_cast<int>(row.size());
    if (t <= 1) continue;  // only BOS available
    int best = t - 1;      // slot t-1 = word w-1, the most recent
    for (int j = t - 2; j >= 1; --j)
      if (row[j] > row[best]) best = j;
    A.argmax[w] = best - 1;  // slot i -> word i-1
  }
  A.validate();
  return A;
}

// Recursive split: within the current segment, advance i from 1 while
// column i is all-zero; the prefix becomes the first child and the suffix
// is split recursively. A segment with no attended interior column is a
// leaf. i starts at 1, so every level consumes at least one word.
inline TreePtr build_tree_segment(const BinaryAttentionMatrix& A, int off, int n) {
  auto node = std::make_shared<BinaryTree>();
  node->start = off;
  node->end = off + n;
  if (n <= 1) return node;
  int i = 1;
  while (i < n && !A.column_nonzero(off + i, off, off + n)) ++i;
  if (i == n) return node;  // leaf spanning the whole segment
  auto first = std::make_shared<BinaryTree>();
  first->start = off;
  first->end = off + i;
  node->left = first;
  node->right = build_tree_segment(A, off + i, n - i);
  return node;
}

inline TreePtr build_tree(const BinaryAttentionMatrix& A) {
  if (A.n < 1) throw ContractError("build_tree: empty sentence");
  A.validate();
  return build_tree_segment(A, 0, A.n);
}

// ((w0)((w1)(...))); constituent spans after singleton exclusion are
// {(i, N) : 0 <= i <= N-2}.
inline TreePtr right_branching_tree(int n) {
  if (n < 1) throw ContractError("right_branching_tree: N must be >= 1");
  auto make_leaf = [](int s, int e) {
    auto t = std::make_shared<BinaryTree>();
    t->start = s;
    t->end = e;
    return t;
  };
  TreePtr node = make_leaf(n - 1, n);
  for (int i = n - 2; i >= 0; --i) {
    auto parent = std::make_shared<BinaryTree>();
    parent->start = i;
    parent->end = n;
    parent->left = make_leaf(i, i + 1);
    parent->right = node;
    node = parent;
  }
  return node;
}

inline void leaves_inorder(const BinaryTree& t, std::vector<int>& out) {
  if (t.leaf()) {
    for (int i = t.start; i < t.end; ++i) out.push_back(i);
    return;
  }
  leaves_inorder(*t.left, out);
  leaves_inorder(*t.right, out);
}

inline std::string to_bracketed(const BinaryTree& t,
                                const std::vector<std::string>& words,
                                bool root = true) {
  std::string s;
  if (t.leaf()) {
    if (t.end - t.start == 1 && !root) return words.at(t.start);
    s = "(";
    for (int i = t.start; i < t.end; ++i) {
      if (i > t.start) s += ' ';
      s += words.at(i);
    }
    s += ")";
    return s;
  }
  return "(" + to_bracketed(*t.left, words, false) + " " +
         to_bracketed(*t.right, words, false) + ")";
}

// Bracketed constituent structure ingested from file; labels (a bare token
// directly before a parenthesized child) are ignored.
struct GoldTree {
  std::vector<std::string> words;
  SpanSet spans;  // all spans, singletons included

  SpanSet multiword_spans() const {
    SpanSet s;
    for (const auto& sp : spans)
      if (sp.second - sp.first > 1) s.insert(sp);
    return s;
  }
};

namespace detail {

struct BracketParser {
  std::vector<std::string> toks;
  std::size_t pos = 0;
  GoldTree out;

  static std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> toks;
    std::string cur;
    for (char c : line) {
      if (c == '(' || c == ')') {
        if (!cur.empty()) {
          toks.push_back(cur);
          cur.clear();
        }
        toks.push_back(std::string(1, c));
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!cur.empty()) {
          toks.push_back(cur);
          cur.clear();
        }
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) toks.push_back(cur);
    return toks;
  }

  // number of top-level parenthesized groups from `from` to the ')' that
  // closes the current node
  int sibling_groups(std::size_t from) const {
    int depth = 0, groups = 0;
    for (std::size_t i = from; i < toks.size(); ++i) {
      if (toks[i] == "(") {
        if (depth == 0) ++groups;
        ++depth;
      } else if (toks[i] == ")") {
        if (depth == 0) break;  // closes the enclosing node
        --depth;
      }
    }
    return groups;
  }

  // returns [start,end) of the constituent
  std::pair<int, int> parse_node() {
    if (pos >= toks.size() || toks[pos] != "(")
      throw ParseError("expected '('");
    ++pos;
    const int start = static_cast<int>(out.words.size());
    bool first = true;
    while (pos < toks.size() && toks[pos] != ")") {
      if (toks[pos] == "(") {
        auto child = parse_node();
        out.spans.insert(child);
      } else {
        // A bare leading token is a label only when at least two
        // parenthesized children follow; with a single child it is read as
        // a word so unlabeled trees like "(a (b c))" keep their leaf.
        if (first && pos + 1 < toks.size() && toks[pos + 1] == "(" &&
            sibling_groups(pos + 1) >= 2) {
          ++pos;
          first = false;
          continue;
        }
        out.spans.insert({static_cast<int>(out.words.size()),
                          static_cast<int>(out.words.size()) + 1});
        out.words.push_back(toks[pos]);
        ++pos;
      }
      first = false;
    }
    if (pos >= toks.size()) throw ParseError("unbalanced parentheses");
    ++pos;  // ')'
    return {start, static_cast<int>(out.words.size())};
  }

  GoldTree parse(const std::string& line) {
    toks = tokenize(line);
    auto root = parse_node();
    if (pos != toks.size()) throw ParseError("trailing tokens after tree");
    out.spans.insert(root);
    if (out.words.empty()) throw ParseError("tree has no leaves");
    return out;
  }
};

}  // namespace detail

inline GoldTree parse_bracketed(const std::string& line) {
  detail::BracketParser p;
  return p.parse(line);
}

inline std::vector<GoldTree> load_gold_trees(std::istream& is) {
  std::vector<GoldTree> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(parse_bracketed(line));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<GoldTree> load_gold_trees(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("cannot read trees: " + path);
  return load_gold_trees(is);
}

struct ParsevalScore {
  double precision = 0, recall = 0;
  long matched = 0;
};

// Span-set intersection over multi-word spans (full-sentence span kept);
// empty denominators score 0.
inline ParsevalScore parseval(const SpanSet& predicted, const SpanSet& gold) {
  ParsevalScore s;
  for (const auto& sp : predicted)
    if (gold.count(sp)) ++s.matched;
  s.precision = predicted.empty()
                    ? 0.0
                    : static_cast<double>(s.matched) / predicted.size();
  s.recall = gold.empty() ? 0.0 : static_cast<double>(s.matched) / gold.size();
  return s;
}

inline ParsevalScore parseval(const BinaryTree& predicted, const GoldTree& gold) {
  std::vector<int> leaves;
  leaves_inorder(predicted, leaves);
  if (leaves.size() != gold.words.size())
    throw InputError("parseval: sentence length mismatch");
  return parseval(tree_spans(predicted, true), gold.multiword_spans());
}

}  // namespace ars

#endif
