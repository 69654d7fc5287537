#pragma once

#include <unordered_map>

#include "lms/model.hpp"
#include "lms/tree.hpp"

namespace lms {

// Entailment label codes, fixed across checkpoints and reports.
constexpr int kEntailment = 0;
constexpr int kContradiction = 1;
constexpr int kNeutral = 2;

int label_from_string(const std::string& s);
const char* label_to_string(int label);

// Dense token ids with a reserved UNK at index 0. When built from a
// pretrained table, `embeddings` holds one row per token (row 0 is the UNK
// vector) and corpus tokens missing from the table resolve to UNK.
struct Vocabulary {
  std::vector<std::string> tokens{"<unk>"};
  std::unordered_map<std::string, int64_t> index;
  bool case_fold = false;
  int64_t d_emb = 0;
  std::vector<double> embeddings;

  int64_t size() const { return static_cast<int64_t>(tokens.size()); }
  std::string fold(const std::string& token) const;
  int64_t lookup(const std::string& token) const;
};

Vocabulary build_vocabulary(const std::vector<std::string>& corpus_tokens, bool case_fold);

// One premise/hypothesis pair. Labeled parses ride along when the source
// provides them (root stays -1 otherwise); the probe needs them, training
// does not.
struct ExamplePair {
  ParseTree premise;
  ParseTree hypothesis;
  TransitionSequence premise_ops;
  TransitionSequence hypothesis_ops;
  ParseTree premise_labeled;
  ParseTree hypothesis_labeled;
  int label = -1;
  std::string genre;
};

struct NliLoad {
  std::vector<ExamplePair> examples;
  int64_t skipped_unlabeled = 0;  // gold_label "-" or missing
  int64_t skipped_malformed = 0;  // bad parses under strict=false
};

// One JSON record per line; '#' lines are comments. Fields: gold_label,
// sentence1_binary_parse, sentence2_binary_parse, optional sentence1_parse /
// sentence2_parse / genre. Malformed JSON always errors with its line number;
// malformed parses error under strict, otherwise skip and count.
NliLoad load_nli(const std::string& path, bool strict = true);

// Text lines "token v1 ... v_d". Keeps rows only for tokens that appear in
// corpus_tokens; the UNK row is drawn U(-0.05, 0.05) from rng and corpus
// tokens absent from the table map to it.
Vocabulary load_embeddings(const std::string& path, const std::vector<std::string>& corpus_tokens,
                           bool case_fold, Rng& rng);

std::vector<ParseTree> load_sst(const std::string& path);

// Tokens of both sides of every pair, in corpus order (vocabulary input).
std::vector<std::string> collect_pair_tokens(const std::vector<ExamplePair>& examples);

Sentence to_sentence(const Vocabulary& vocab, const ParseTree& tree, const TransitionSequence& ops);

}  // namespace lms
