#include "lms/synthetic.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace lms {

void SyntheticConfig::validate() const {
  if (n_examples < 3) throw_usage("synthetic: need at least 3 examples, got " + std::to_string(n_examples));
  if (domain_size < 1 || domain_size > 5)
    throw_usage("synthetic: domain_size must be in 1..5, got " + std::to_string(domain_size));
  if (content_words < 1 || modifier_words < 1)
    throw_usage("synthetic: lexicons must be non-empty");
}

std::vector<std::string> SyntheticSentence::tokens() const {
  std::vector<std::string> out{quantifier};
  if (!adjective.empty()) out.push_back(adjective);
  out.push_back(noun);
  out.push_back(verb);
  if (!adverb.empty()) out.push_back(adverb);
  return out;
}

std::string SyntheticSentence::binary_parse() const {
  std::string np = adjective.empty() ? noun : "( " + adjective + " " + noun + " )";
  std::string vp = adverb.empty() ? verb : "( " + verb + " " + adverb + " )";
  return "( ( " + quantifier + " " + np + " ) " + vp + " )";
}

std::string SyntheticSentence::labeled_parse() const {
  std::string np = adjective.empty() ? "(N " + noun + ")" : "(NP (A " + adjective + ") (N " + noun + "))";
  std::string vp = adverb.empty() ? "(V " + verb + ")" : "(VP (V " + verb + ") (R " + adverb + "))";
  return "(ROOT (NP (Q " + quantifier + ") " + np + ") " + vp + ")";
}

namespace {

// Per-sentence semantics reduced to two per-element bits: x in restrictor,
// x in scope.
struct SentenceSignature {
  int quant;  // 0 every, 1 some, 2 no
  std::vector<int> restrictor;  // predicate bit positions
  std::vector<int> scope;
};

int quant_code(const std::string& q) {
  if (q == "every") return 0;
  if (q == "some") return 1;
  if (q == "no") return 2;
  throw_data("unknown quantifier '" + q + "'");
}

// truth given per-element (restrictor, scope) bits over the whole domain
bool quant_truth(int quant, const std::vector<std::pair<bool, bool>>& elems) {
  switch (quant) {
    case 0:
      for (auto [r, s] : elems)
        if (r && !s) return false;
      return true;  // vacuous over an empty restrictor
    case 1:
      for (auto [r, s] : elems)
        if (r && s) return true;
      return false;
    default:
      for (auto [r, s] : elems)
        if (r && s) return false;
      return true;
  }
}

SentenceSignature signature(const SyntheticSentence& s, std::vector<std::string>& syms) {
  auto sym_bit = [&syms](const std::string& name) {
    for (size_t i = 0; i < syms.size(); ++i)
      if (syms[i] == name) return static_cast<int>(i);
    syms.push_back(name);
    return static_cast<int>(syms.size()) - 1;
  };
  SentenceSignature sig;
  sig.quant = quant_code(s.quantifier);
  sig.restrictor.push_back(sym_bit(s.noun));
  if (!s.adjective.empty()) sig.restrictor.push_back(sym_bit(s.adjective));
  sig.scope.push_back(sym_bit(s.verb));
  if (!s.adverb.empty()) sig.scope.push_back(sym_bit(s.adverb));
  return sig;
}

}  // namespace

int oracle_label(const SyntheticSentence& premise, const SyntheticSentence& hypothesis, int64_t domain_size) {
  if (domain_size < 1 || domain_size > 5)
    throw_usage("oracle: domain_size must be in 1..5, got " + std::to_string(domain_size));
  std::vector<std::string> syms;
  SentenceSignature p = signature(premise, syms);
  SentenceSignature h = signature(hypothesis, syms);
  size_t m = syms.size();

  // A domain element's only semantic footprint is four bits: membership in
  // the premise restrictor/scope and the hypothesis restrictor/scope. The
  // predicates are free per element, so a model is any length-k tuple of
  // achievable four-bit patterns. Smaller domains add nothing: the all-out
  // pattern is always achievable and such elements never flip a quantifier,
  // so any model on < k elements extends to one on exactly k.
  auto holds_all = [](const std::vector<int>& bits, uint32_t membership) {
    for (int b : bits)
      if (!(membership >> b & 1)) return false;
    return true;
  };
  std::vector<uint8_t> patterns;
  {
    bool seen[16] = {};
    for (uint32_t membership = 0; membership < (1u << m); ++membership) {
      int pat = (holds_all(p.restrictor, membership) ? 1 : 0) | (holds_all(p.scope, membership) ? 2 : 0) |
                (holds_all(h.restrictor, membership) ? 4 : 0) | (holds_all(h.scope, membership) ? 8 : 0);
      if (!seen[pat]) {
        seen[pat] = true;
        patterns.push_back(static_cast<uint8_t>(pat));
      }
    }
  }

  size_t k = static_cast<size_t>(domain_size);
  std::vector<size_t> idx(k, 0);
  std::vector<std::pair<bool, bool>> pe(k), he(k);
  bool premise_implies = true;
  bool both_satisfiable = false;
  for (;;) {
    for (size_t e = 0; e < k; ++e) {
      uint8_t pat = patterns[idx[e]];
      pe[e] = {(pat & 1) != 0, (pat & 2) != 0};
      he[e] = {(pat & 4) != 0, (pat & 8) != 0};
    }
    bool sat_p = quant_truth(p.quant, pe);
    bool sat_h = quant_truth(h.quant, he);
    if (sat_p && !sat_h) premise_implies = false;
    if (sat_p && sat_h) both_satisfiable = true;
    size_t e = 0;
    while (e < k && ++idx[e] == patterns.size()) idx[e++] = 0;
    if (e == k) break;
  }
  if (premise_implies) return kEntailment;
  if (!both_satisfiable) return kContradiction;
  return kNeutral;
}

namespace {

std::vector<std::string> make_lexicon(const std::vector<std::string>& base, const char* prefix, int64_t n) {
  std::vector<std::string> out;
  for (int64_t i = 0; i < n; ++i) {
    if (i < static_cast<int64_t>(base.size()))
      out.push_back(base[static_cast<size_t>(i)]);
    else
      out.push_back(std::string(prefix) + std::to_string(i));
  }
  return out;
}

const char* kQuantifiers[3] = {"every", "some", "no"};

}  // namespace

SyntheticCorpus gen_synthetic(const SyntheticConfig& config) {
  config.validate();
  auto content = make_lexicon({"dog", "cat", "bird", "fox", "frog", "mole", "crow", "wolf", "hare", "toad"},
                              "word", config.content_words);
  auto modifier = make_lexicon({"small", "big", "red", "blue", "old", "young", "loud", "quiet"}, "mod",
                               config.modifier_words);

  Rng rng(config.seed);
  auto sample = [&]() {
    SyntheticSentence s;
    s.quantifier = kQuantifiers[rng.below(3)];
    bool has_adj = rng.bernoulli(0.5);
    bool has_adv = rng.bernoulli(0.5);
    s.noun = content[static_cast<size_t>(rng.below(config.content_words))];
    s.verb = content[static_cast<size_t>(rng.below(config.content_words))];
    if (has_adj) s.adjective = modifier[static_cast<size_t>(rng.below(config.modifier_words))];
    if (has_adv) s.adverb = modifier[static_cast<size_t>(rng.below(config.modifier_words))];
    return s;
  };

  std::array<int64_t, 3> target{};
  for (int c = 0; c < 3; ++c) target[static_cast<size_t>(c)] = config.n_examples / 3;
  for (int c = 0; c < config.n_examples % 3; ++c) ++target[static_cast<size_t>(c)];

  SyntheticCorpus corpus;
  corpus.config = config;
  int64_t accepted = 0;
  int64_t attempts = 0;
  const int64_t max_attempts = 400 * config.n_examples + 10000;
  while (accepted < config.n_examples) {
    if (++attempts > max_attempts) {
      size_t starved = 0;
      for (size_t c = 1; c < 3; ++c)
        if (target[c] - corpus.class_counts[c] > target[starved] - corpus.class_counts[starved]) starved = c;
      throw_data("synthetic: class '" + std::string(label_to_string(static_cast<int>(starved))) +
                 "' still needs " + std::to_string(target[starved] - corpus.class_counts[starved]) +
                 " examples after " + std::to_string(attempts - 1) +
                 " draws; grow the lexicons or adjust domain_size");
    }
    SyntheticSentence ps = sample();
    SyntheticSentence hs = sample();
    int label = oracle_label(ps, hs, config.domain_size);
    if (corpus.class_counts[static_cast<size_t>(label)] >= target[static_cast<size_t>(label)]) continue;

    ExamplePair ex;
    ex.premise = parse_binary(ps.binary_parse());
    ex.hypothesis = parse_binary(hs.binary_parse());
    ex.premise_ops = to_transitions(ex.premise);
    ex.hypothesis_ops = to_transitions(ex.hypothesis);
    ex.premise_labeled = parse_labeled(ps.labeled_parse());
    ex.hypothesis_labeled = parse_labeled(hs.labeled_parse());
    ex.label = label;
    ex.genre = "synthetic";
    corpus.examples.push_back(std::move(ex));
    corpus.sentences.emplace_back(std::move(ps), std::move(hs));
    ++corpus.class_counts[static_cast<size_t>(label)];
    ++accepted;
  }
  return corpus;
}

std::string synthetic_header(const SyntheticConfig& config) {
  nlohmann::ordered_json j;
  j["task"] = "synthetic";
  j["n_examples"] = config.n_examples;
  j["seed"] = config.seed;
  j["domain_size"] = config.domain_size;
  j["content_words"] = config.content_words;
  j["modifier_words"] = config.modifier_words;
  return "# " + j.dump();
}

void write_nli(const SyntheticCorpus& corpus, const std::string& path) {
  if (corpus.sentences.size() != corpus.examples.size())
    throw_internal("write_nli: corpus sentence strings out of sync with examples");
  std::ofstream out(path);
  if (!out) throw_data("cannot write " + path);
  out << synthetic_header(corpus.config) << "\n";
  for (size_t i = 0; i < corpus.examples.size(); ++i) {
    const auto& ex = corpus.examples[i];
    const auto& [ps, hs] = corpus.sentences[i];
    nlohmann::ordered_json j;
    j["gold_label"] = label_to_string(ex.label);
    j["sentence1_binary_parse"] = ps.binary_parse();
    j["sentence1_parse"] = ps.labeled_parse();
    j["sentence2_binary_parse"] = hs.binary_parse();
    j["sentence2_parse"] = hs.labeled_parse();
    j["genre"] = ex.genre;
    out << j.dump() << "\n";
  }
  if (!out) throw_data("write failed for " + path);
}

}  // namespace lms
