#include "lms/data.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace lms {

int label_from_string(const std::string& s) {
  if (s == "entailment") return kEntailment;
  if (s == "contradiction") return kContradiction;
  if (s == "neutral") return kNeutral;
  throw_data("unknown label '" + s + "'");
}

const char* label_to_string(int label) {
  switch (label) {
    case kEntailment: return "entailment";
    case kContradiction: return "contradiction";
    case kNeutral: return "neutral";
  }
  throw_usage("label code " + std::to_string(label) + " out of range");
}

std::string Vocabulary::fold(const std::string& token) const {
  if (!case_fold) return token;
  std::string out = token;
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

int64_t Vocabulary::lookup(const std::string& token) const {
  auto it = index.find(fold(token));
  return it == index.end() ? 0 : it->second;
}

Vocabulary build_vocabulary(const std::vector<std::string>& corpus_tokens, bool case_fold) {
  Vocabulary v;
  v.case_fold = case_fold;
  v.index.emplace(v.tokens[0], 0);
  for (const auto& raw : corpus_tokens) {
    std::string t = v.fold(raw);
    if (v.index.count(t)) continue;
    v.index.emplace(t, v.size());
    v.tokens.push_back(t);
  }
  return v;
}

NliLoad load_nli(const std::string& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open " + path);
  NliLoad out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw_data("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    std::string gold = rec.value("gold_label", std::string("-"));
    if (gold == "-" || gold.empty()) {
      ++out.skipped_unlabeled;
      continue;
    }
    try {
      ExamplePair ex;
      ex.label = label_from_string(gold);
      if (!rec.contains("sentence1_binary_parse") || !rec.contains("sentence2_binary_parse"))
        throw_data("missing binary parse field");
      ex.premise = parse_binary(rec["sentence1_binary_parse"].get<std::string>());
      ex.hypothesis = parse_binary(rec["sentence2_binary_parse"].get<std::string>());
      ex.premise_ops = to_transitions(ex.premise);
      ex.hypothesis_ops = to_transitions(ex.hypothesis);
      if (rec.contains("sentence1_parse") && rec["sentence1_parse"].is_string())
        ex.premise_labeled = parse_labeled(rec["sentence1_parse"].get<std::string>());
      if (rec.contains("sentence2_parse") && rec["sentence2_parse"].is_string())
        ex.hypothesis_labeled = parse_labeled(rec["sentence2_parse"].get<std::string>());
      ex.genre = rec.value("genre", std::string());
      out.examples.push_back(std::move(ex));
    } catch (const Error& e) {
      if (strict) throw_data("line " + std::to_string(lineno) + ": " + e.what());
      ++out.skipped_malformed;
    }
  }
  return out;
}

Vocabulary load_embeddings(const std::string& path, const std::vector<std::string>& corpus_tokens,
                           bool case_fold, Rng& rng) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open " + path);

  Vocabulary v;
  v.case_fold = case_fold;
  std::unordered_map<std::string, std::vector<double>> wanted;
  std::vector<std::string> order;
  for (const auto& raw : corpus_tokens) {
    std::string t = v.fold(raw);
    if (!wanted.count(t)) {
      wanted.emplace(t, std::vector<double>{});
      order.push_back(t);
    }
  }

  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    auto it = wanted.find(v.fold(token));
    std::vector<double> vec;
    double x;
    while (ss >> x) vec.push_back(x);
    if (vec.empty()) throw_data("line " + std::to_string(lineno) + ": no values after token");
    if (v.d_emb == 0) v.d_emb = static_cast<int64_t>(vec.size());
    if (static_cast<int64_t>(vec.size()) != v.d_emb)
      throw_data("line " + std::to_string(lineno) + ": expected " + std::to_string(v.d_emb) +
                 " values, got " + std::to_string(vec.size()));
    if (it != wanted.end() && it->second.empty()) it->second = std::move(vec);
  }
  if (v.d_emb == 0) throw_data("embedding file " + path + " has no rows");

  v.index.emplace(v.tokens[0], 0);
  v.embeddings.resize(static_cast<size_t>(v.d_emb));
  for (auto& x : v.embeddings) x = rng.uniform(-0.05, 0.05);  // UNK row
  for (const auto& t : order) {
    auto& vec = wanted[t];
    if (vec.empty()) continue;  // not in the table: resolves to UNK
    v.index.emplace(t, v.size());
    v.tokens.push_back(t);
    v.embeddings.insert(v.embeddings.end(), vec.begin(), vec.end());
  }
  return v;
}

std::vector<ParseTree> load_sst(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_data("cannot open " + path);
  std::vector<ParseTree> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    try {
      out.push_back(parse_sst(line));
    } catch (const Error& e) {
      throw_data("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> collect_pair_tokens(const std::vector<ExamplePair>& examples) {
  std::vector<std::string> out;
  for (const auto& ex : examples) {
    for (const auto& t : ex.premise.tokens()) out.push_back(t);
    for (const auto& t : ex.hypothesis.tokens()) out.push_back(t);
  }
  return out;
}

Sentence to_sentence(const Vocabulary& vocab, const ParseTree& tree, const TransitionSequence& ops) {
  Sentence s;
  for (const auto& t : tree.tokens()) s.ids.push_back(vocab.lookup(t));
  s.ops = ops.ops;
  return s;
}

}  // namespace lms
