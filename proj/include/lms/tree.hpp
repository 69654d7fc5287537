#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lms/error.hpp"
#include "lms/rng.hpp"

namespace lms {

// Binarized constituency tree in a flat arena; children referenced by index.
// Spans are half-open token intervals; leaf spans have unit width.
struct ParseTree {
  struct Node {
    int left = -1;
    int right = -1;
    std::string token;  // leaves only
    std::string label;  // phrase category, empty if none
    int sentiment = -1;  // 0..4 for SST trees
    int64_t begin = 0;
    int64_t end = 0;
    bool is_leaf() const { return left < 0; }
  };

  std::vector<Node> nodes;
  int root = -1;

  int64_t num_tokens() const { return root < 0 ? 0 : nodes[static_cast<size_t>(root)].end; }
  std::vector<std::string> tokens() const;
  bool same_shape(const ParseTree& other) const;
};

enum class Transition : uint8_t { Shift, Reduce, NoOp };

// SHIFT/REDUCE linearization of a binary tree: n shifts, n-1 reduces, and
// every proper prefix keeps the stack nonempty after the first step.
struct TransitionSequence {
  std::vector<Transition> ops;
  std::vector<std::string> tokens;
};

struct LabeledSpan {
  int64_t begin = 0;
  int64_t end = 0;
  std::string label;
};

// "( ( A dog ) runs )": strictly binary, single tokens become leaves, unary
// wrapping collapses. Parens need not be space-separated.
ParseTree parse_binary(const std::string& text);

// PTB-style "(NP (DT a) (NN dog))": POS pre-terminals are discarded, n-ary
// nodes are right-binarized (label kept on the top node only), and the root
// is relabeled ROOT.
ParseTree parse_labeled(const std::string& text);

// SST form "(3 (2 a) (4 b))": integer labels 0..4 on every node, internal
// arity exactly 2.
ParseTree parse_sst(const std::string& text);

TransitionSequence to_transitions(const ParseTree& tree);

// Throws if the shift/reduce counts or the prefix invariant are violated.
void validate_transitions(const TransitionSequence& seq);

ParseTree reconstruct(const TransitionSequence& seq);

// Labeled constituents of a tree, excluding unlabeled nodes.
std::vector<LabeledSpan> labeled_spans(const ParseTree& tree);

// Category per binary-tree node: the unique labeled constituent with the
// identical span, ROOT at the root, nothing elsewhere. Ambiguous spans are
// excluded. Token sequences must match.
std::vector<std::optional<std::string>> align_spans(const ParseTree& binary, const ParseTree& labeled);

// Uniform random binary tree shape over n leaves; tokens w0..w{n-1} unless
// an alphabet is given, in which case tokens are drawn from it.
ParseTree random_binary_tree(int64_t n, Rng& rng, const std::vector<std::string>& alphabet = {});

}  // namespace lms
