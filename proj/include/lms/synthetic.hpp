#pragma once

#include <array>

#include "lms/data.hpp"

namespace lms {

// Quantified toy grammar: S -> (QP VP); QP -> (Q N'); N' -> N | (ADJ N);
// VP -> V | (V ADV); Q in {every, some, no}. Nouns and verbs draw from one
// shared content lexicon and adjectives/adverbs from one shared modifier
// lexicon, so word identity alone cannot reveal a span's category.
struct SyntheticConfig {
  int64_t n_examples = 2000;
  uint64_t seed = 0;
  int64_t domain_size = 3;  // 1..5
  int64_t content_words = 6;
  int64_t modifier_words = 4;
  void validate() const;
};

struct SyntheticSentence {
  std::string quantifier;
  std::string noun;
  std::string verb;
  std::string adjective;  // empty when absent
  std::string adverb;     // empty when absent

  std::vector<std::string> tokens() const;
  std::string binary_parse() const;
  std::string labeled_parse() const;
};

// Truth-conditional label over every interpretation of the distinct content
// predicates as subsets of a domain with `domain_size` elements. Restrictor =
// noun (and adjective), scope = verb (and adverb); "every" over an empty
// restrictor is vacuously true. entailment: every model of the premise
// satisfies the hypothesis; contradiction: no model satisfies both;
// neutral otherwise — checked in that order.
int oracle_label(const SyntheticSentence& premise, const SyntheticSentence& hypothesis, int64_t domain_size);

struct SyntheticCorpus {
  SyntheticConfig config;
  std::vector<ExamplePair> examples;
  std::vector<std::pair<SyntheticSentence, SyntheticSentence>> sentences;  // parallel to examples
  std::array<int64_t, 3> class_counts{};
};

// Rejection-samples pairs into near-equal class quotas. Deterministic in the
// seed; throws a data error naming the starved class when quotas cannot fill.
SyntheticCorpus gen_synthetic(const SyntheticConfig& config);

std::string synthetic_header(const SyntheticConfig& config);

// One '#' config header line, then one NLI JSON record per example.
void write_nli(const SyntheticCorpus& corpus, const std::string& path);

}  // namespace lms
