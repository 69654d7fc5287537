#include "lms/tree.hpp"

#include <cctype>

namespace lms {

namespace {

struct Tok {
  enum Kind { Open, Close, Word } kind;
  std::string text;
  size_t offset;
};

std::vector<Tok> lex(const std::string& s) {
  std::vector<Tok> out;
  size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '(' || c == ')') {
      out.push_back({c == '(' ? Tok::Open : Tok::Close, std::string(1, c), i});
      ++i;
      continue;
    }
    size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) && s[j] != '(' && s[j] != ')') ++j;
    out.push_back({Tok::Word, s.substr(i, j - i), i});
    i = j;
  }
  return out;
}

[[noreturn]] void parse_fail(const std::string& what, size_t offset) {
  throw_data(what + " at offset " + std::to_string(offset));
}

int make_leaf(ParseTree& tree, std::string token, int64_t& leaf_count) {
  ParseTree::Node n;
  n.token = std::move(token);
  n.begin = leaf_count;
  n.end = ++leaf_count;
  tree.nodes.push_back(std::move(n));
  return static_cast<int>(tree.nodes.size()) - 1;
}

int make_internal(ParseTree& tree, int left, int right, std::string label = {}) {
  ParseTree::Node n;
  n.left = left;
  n.right = right;
  n.label = std::move(label);
  n.begin = tree.nodes[static_cast<size_t>(left)].begin;
  n.end = tree.nodes[static_cast<size_t>(right)].end;
  tree.nodes.push_back(std::move(n));
  return static_cast<int>(tree.nodes.size()) - 1;
}

int parse_binary_elem(const std::vector<Tok>& ts, size_t& pos, ParseTree& tree, int64_t& leaf_count) {
  if (pos >= ts.size()) parse_fail("unexpected end of parse", ts.empty() ? 0 : ts.back().offset);
  const Tok& t = ts[pos];
  if (t.kind == Tok::Word) {
    ++pos;
    return make_leaf(tree, t.text, leaf_count);
  }
  if (t.kind == Tok::Close) parse_fail("unexpected ')'", t.offset);
  size_t open_at = t.offset;
  ++pos;
  std::vector<int> kids;
  while (pos < ts.size() && ts[pos].kind != Tok::Close) kids.push_back(parse_binary_elem(ts, pos, tree, leaf_count));
  if (pos >= ts.size()) parse_fail("unbalanced '('", open_at);
  ++pos;  // consume ')'
  if (kids.empty()) parse_fail("empty constituent", open_at);
  if (kids.size() == 1) return kids[0];  // unary wrapping collapses
  if (kids.size() > 2)
    parse_fail("constituent with " + std::to_string(kids.size()) + " parts in a binary parse", open_at);
  return make_internal(tree, kids[0], kids[1]);
}

// Right-binarize an n-ary child list; the category stays on the top node.
int binarize(ParseTree& tree, const std::vector<int>& kids, std::string label) {
  int right = kids.back();
  for (size_t i = kids.size() - 1; i-- > 1;) right = make_internal(tree, kids[i], right);
  return make_internal(tree, kids[0], right, std::move(label));
}

int parse_labeled_node(const std::vector<Tok>& ts, size_t& pos, ParseTree& tree, int64_t& leaf_count) {
  if (pos >= ts.size()) parse_fail("unexpected end of parse", ts.empty() ? 0 : ts.back().offset);
  const Tok& t = ts[pos];
  if (t.kind == Tok::Word) {
    ++pos;
    return make_leaf(tree, t.text, leaf_count);
  }
  if (t.kind == Tok::Close) parse_fail("unexpected ')'", t.offset);
  size_t open_at = t.offset;
  ++pos;
  // "( (S ...) )" style unlabeled grouping keeps an empty category.
  std::string label;
  if (pos < ts.size() && ts[pos].kind == Tok::Word) {
    label = ts[pos].text;
    ++pos;
  }
  std::vector<int> kids;
  while (pos < ts.size() && ts[pos].kind != Tok::Close)
    kids.push_back(parse_labeled_node(ts, pos, tree, leaf_count));
  if (pos >= ts.size()) parse_fail("unbalanced '('", open_at);
  ++pos;
  if (kids.empty()) parse_fail("constituent '" + label + "' with no children", open_at);
  if (kids.size() == 1) {
    int child = kids[0];
    auto& cn = tree.nodes[static_cast<size_t>(child)];
    // POS pre-terminals disappear; for phrase-over-phrase unaries the inner
    // (more specific) category wins.
    if (!cn.is_leaf() && cn.label.empty()) cn.label = label;
    return child;
  }
  return binarize(tree, kids, std::move(label));
}

int parse_sst_node(const std::vector<Tok>& ts, size_t& pos, ParseTree& tree, int64_t& leaf_count) {
  if (pos >= ts.size()) parse_fail("unexpected end of parse", ts.empty() ? 0 : ts.back().offset);
  if (ts[pos].kind != Tok::Open) parse_fail("expected '('", ts[pos].offset);
  size_t open_at = ts[pos].offset;
  ++pos;
  if (pos >= ts.size() || ts[pos].kind != Tok::Word) parse_fail("expected sentiment label", open_at);
  const Tok& lab = ts[pos];
  int sentiment = -1;
  try {
    size_t used = 0;
    sentiment = std::stoi(lab.text, &used);
    if (used != lab.text.size()) sentiment = -1;
  } catch (...) {
    sentiment = -1;
  }
  if (sentiment < 0 || sentiment > 4)
    parse_fail("sentiment label '" + lab.text + "' outside 0..4", lab.offset);
  ++pos;
  int node;
  if (pos < ts.size() && ts[pos].kind == Tok::Word) {
    node = make_leaf(tree, ts[pos].text, leaf_count);
    ++pos;
  } else {
    int left = parse_sst_node(ts, pos, tree, leaf_count);
    int right = parse_sst_node(ts, pos, tree, leaf_count);
    node = make_internal(tree, left, right);
  }
  if (pos >= ts.size() || ts[pos].kind != Tok::Close)
    parse_fail("sentiment node needs one token or exactly two children", open_at);
  ++pos;
  tree.nodes[static_cast<size_t>(node)].sentiment = sentiment;
  return node;
}

void expect_done(const std::vector<Tok>& ts, size_t pos) {
  if (pos < ts.size()) parse_fail("trailing content", ts[pos].offset);
}

}  // namespace

std::vector<std::string> ParseTree::tokens() const {
  std::vector<std::string> out(static_cast<size_t>(num_tokens()));
  for (const auto& n : nodes)
    if (n.is_leaf()) out[static_cast<size_t>(n.begin)] = n.token;
  return out;
}

bool ParseTree::same_shape(const ParseTree& other) const {
  if ((root < 0) != (other.root < 0)) return false;
  if (root < 0) return true;
  std::vector<std::pair<int, int>> work{{root, other.root}};
  while (!work.empty()) {
    auto [a, b] = work.back();
    work.pop_back();
    const Node& na = nodes[static_cast<size_t>(a)];
    const Node& nb = other.nodes[static_cast<size_t>(b)];
    if (na.is_leaf() != nb.is_leaf()) return false;
    if (na.is_leaf()) {
      if (na.token != nb.token || na.begin != nb.begin) return false;
    } else {
      work.emplace_back(na.left, nb.left);
      work.emplace_back(na.right, nb.right);
    }
  }
  return true;
}

ParseTree parse_binary(const std::string& text) {
  auto ts = lex(text);
  if (ts.empty()) throw_data("empty parse string");
  ParseTree tree;
  int64_t leaves = 0;
  size_t pos = 0;
  tree.root = parse_binary_elem(ts, pos, tree, leaves);
  expect_done(ts, pos);
  return tree;
}

ParseTree parse_labeled(const std::string& text) {
  auto ts = lex(text);
  if (ts.empty()) throw_data("empty parse string");
  ParseTree tree;
  int64_t leaves = 0;
  size_t pos = 0;
  tree.root = parse_labeled_node(ts, pos, tree, leaves);
  expect_done(ts, pos);
  tree.nodes[static_cast<size_t>(tree.root)].label = "ROOT";
  return tree;
}

ParseTree parse_sst(const std::string& text) {
  auto ts = lex(text);
  if (ts.empty()) throw_data("empty parse string");
  ParseTree tree;
  int64_t leaves = 0;
  size_t pos = 0;
  tree.root = parse_sst_node(ts, pos, tree, leaves);
  expect_done(ts, pos);
  return tree;
}

TransitionSequence to_transitions(const ParseTree& tree) {
  TransitionSequence seq;
  if (tree.root < 0) return seq;
  // Post-order: left subtree, right subtree, reduce.
  std::vector<std::pair<int, bool>> work{{tree.root, false}};
  while (!work.empty()) {
    auto [idx, expanded] = work.back();
    work.pop_back();
    const auto& n = tree.nodes[static_cast<size_t>(idx)];
    if (n.is_leaf()) {
      seq.ops.push_back(Transition::Shift);
      seq.tokens.push_back(n.token);
    } else if (expanded) {
      seq.ops.push_back(Transition::Reduce);
    } else {
      work.emplace_back(idx, true);
      work.emplace_back(n.right, false);
      work.emplace_back(n.left, false);
    }
  }
  return seq;
}

void validate_transitions(const TransitionSequence& seq) {
  int64_t shifts = 0, reduces = 0;
  for (size_t i = 0; i < seq.ops.size(); ++i) {
    if (seq.ops[i] == Transition::NoOp) throw_data("no-op transition outside a padded batch");
    if (seq.ops[i] == Transition::Shift)
      ++shifts;
    else
      ++reduces;
    if (shifts < reduces + 1)
      throw_data("transition " + std::to_string(i) + " leaves the stack short (" + std::to_string(shifts) +
                 " shifts, " + std::to_string(reduces) + " reduces)");
  }
  if (shifts != static_cast<int64_t>(seq.tokens.size()))
    throw_data("shift count " + std::to_string(shifts) + " does not match token count " +
               std::to_string(seq.tokens.size()));
  if (!seq.ops.empty() && reduces != shifts - 1)
    throw_data("sequence must end with a single stack entry, got " + std::to_string(shifts - reduces));
}

ParseTree reconstruct(const TransitionSequence& seq) {
  validate_transitions(seq);
  ParseTree tree;
  if (seq.ops.empty()) return tree;
  std::vector<int> stack;
  int64_t leaves = 0;
  size_t next_token = 0;
  for (Transition op : seq.ops) {
    if (op == Transition::Shift) {
      stack.push_back(make_leaf(tree, seq.tokens[next_token++], leaves));
    } else {
      int right = stack.back();
      stack.pop_back();
      int left = stack.back();
      stack.pop_back();
      stack.push_back(make_internal(tree, left, right));
    }
  }
  tree.root = stack.back();
  return tree;
}

std::vector<LabeledSpan> labeled_spans(const ParseTree& tree) {
  std::vector<LabeledSpan> out;
  for (const auto& n : tree.nodes)
    if (!n.label.empty()) out.push_back({n.begin, n.end, n.label});
  return out;
}

std::vector<std::optional<std::string>> align_spans(const ParseTree& binary, const ParseTree& labeled) {
  auto bt = binary.tokens();
  auto lt = labeled.tokens();
  if (bt.size() != lt.size())
    throw_data("token counts differ: " + std::to_string(bt.size()) + " vs " + std::to_string(lt.size()));
  for (size_t i = 0; i < bt.size(); ++i)
    if (bt[i] != lt[i])
      throw_data("token " + std::to_string(i) + " differs: '" + bt[i] + "' vs '" + lt[i] + "'");

  // Span -> category; a span seen with two categories is ambiguous and drops
  // out of the probe data.
  std::vector<LabeledSpan> spans = labeled_spans(labeled);
  auto find = [&](int64_t b, int64_t e) -> std::optional<std::string> {
    std::optional<std::string> found;
    for (const auto& s : spans) {
      if (s.begin != b || s.end != e) continue;
      if (found && *found != s.label) return std::nullopt;
      found = s.label;
    }
    return found;
  };

  std::vector<std::optional<std::string>> out(binary.nodes.size());
  for (size_t i = 0; i < binary.nodes.size(); ++i) {
    const auto& n = binary.nodes[i];
    if (static_cast<int>(i) == binary.root)
      out[i] = "ROOT";
    else
      out[i] = find(n.begin, n.end);
  }
  return out;
}

ParseTree random_binary_tree(int64_t n, Rng& rng, const std::vector<std::string>& alphabet) {
  if (n <= 0) throw_usage("random tree needs at least one token");
  ParseTree tree;
  int64_t leaves = 0;
  std::vector<int> frontier;
  for (int64_t i = 0; i < n; ++i) {
    std::string tok = alphabet.empty() ? "w" + std::to_string(i)
                                       : alphabet[static_cast<size_t>(rng.below(alphabet.size()))];
    frontier.push_back(make_leaf(tree, std::move(tok), leaves));
  }
  while (frontier.size() > 1) {
    size_t k = static_cast<size_t>(rng.below(frontier.size() - 1));
    frontier[k] = make_internal(tree, frontier[k], frontier[k + 1]);
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(k) + 1);
  }
  tree.root = frontier[0];
  return tree;
}

}  // namespace lms
