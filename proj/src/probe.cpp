#include "lms/probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"
#include "lms/optim.hpp"

namespace lms {

namespace {

void finish_dataset(ProbeDataset& ds, uint64_t split_seed) {
  if (ds.states.empty()) throw_data("probe found no labeled constituent states");
  ds.split_seed = split_seed;
  int64_t n = static_cast<int64_t>(ds.states.size());
  std::vector<int64_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  Rng rng(split_seed);
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.below(static_cast<uint64_t>(i + 1)))]);
  int64_t n_test = n / 5;
  ds.train_idx.assign(perm.begin(), perm.end() - n_test);
  ds.test_idx.assign(perm.end() - n_test, perm.end());
}

int label_id(ProbeDataset& ds, const std::string& name) {
  for (size_t i = 0; i < ds.label_names.size(); ++i)
    if (ds.label_names[i] == name) return static_cast<int>(i);
  ds.label_names.push_back(name);
  return static_cast<int>(ds.label_names.size()) - 1;
}

// span -> category for the labeled constituents of one binary tree
std::map<std::pair<int64_t, int64_t>, std::string> span_categories(const ParseTree& binary,
                                                                   const ParseTree& labeled) {
  auto cats = align_spans(binary, labeled);
  std::map<std::pair<int64_t, int64_t>, std::string> by_span;
  for (size_t i = 0; i < cats.size(); ++i) {
    if (!cats[i]) continue;
    const auto& node = binary.nodes[i];
    by_span.emplace(std::make_pair(node.begin, node.end), *cats[i]);
  }
  return by_span;
}

}  // namespace

template <class T>
ProbeDataset collect_states(Model<T>& model, const std::vector<ExamplePair>& examples,
                            const Vocabulary& vocab, uint64_t split_seed) {
  ProbeDataset ds;
  ds.width = model.spec.d;
  LeafFn<T> leaf = model_leaf_fn(model, nullptr);
  auto one_side = [&](const ParseTree& binary, const TransitionSequence& ops, const ParseTree& labeled) {
    if (labeled.root < 0) {
      ++ds.alignment_failures;
      return;
    }
    std::map<std::pair<int64_t, int64_t>, std::string> by_span;
    try {
      by_span = span_categories(binary, labeled);
    } catch (const Error&) {
      ++ds.alignment_failures;
      return;
    }
    Sentence s = to_sentence(vocab, binary, ops);
    Tape<T> tape;
    ExecutionTrace<T> trace = run_single(tape, model.spec, model.store, s.ids, s.ops, leaf);
    for (const auto& entry : trace.entries) {
      auto it = by_span.find({entry.begin, entry.end});
      if (it == by_span.end()) continue;
      std::vector<double> v(entry.state.h.v.size());
      for (size_t k = 0; k < v.size(); ++k) v[k] = static_cast<double>(entry.state.h.v[k]);
      ds.states.push_back(std::move(v));
      ds.labels.push_back(label_id(ds, it->second));
    }
  };
  for (const auto& ex : examples) {
    one_side(ex.premise, ex.premise_ops, ex.premise_labeled);
    one_side(ex.hypothesis, ex.hypothesis_ops, ex.hypothesis_labeled);
  }
  finish_dataset(ds, split_seed);
  return ds;
}

template ProbeDataset collect_states<float>(Model<float>&, const std::vector<ExamplePair>&,
                                            const Vocabulary&, uint64_t);
template ProbeDataset collect_states<double>(Model<double>&, const std::vector<ExamplePair>&,
                                             const Vocabulary&, uint64_t);

ProbeDataset bow_states(const std::vector<double>& table, int64_t d_emb, const Vocabulary& vocab,
                        const std::vector<ExamplePair>& examples, uint64_t split_seed) {
  if (d_emb <= 0 || table.size() % static_cast<size_t>(d_emb) != 0)
    throw_usage("bow_states: embedding table is not a multiple of d_emb");
  int64_t rows = static_cast<int64_t>(table.size()) / d_emb;
  ProbeDataset ds;
  ds.width = d_emb;
  auto one_side = [&](const ParseTree& binary, const ParseTree& labeled) {
    if (labeled.root < 0) {
      ++ds.alignment_failures;
      return;
    }
    std::map<std::pair<int64_t, int64_t>, std::string> by_span;
    try {
      by_span = span_categories(binary, labeled);
    } catch (const Error&) {
      ++ds.alignment_failures;
      return;
    }
    std::vector<std::string> tokens = binary.tokens();
    for (const auto& node : binary.nodes) {
      auto it = by_span.find({node.begin, node.end});
      if (it == by_span.end()) continue;
      std::vector<double> v(static_cast<size_t>(d_emb), 0.0);
      for (int64_t t = node.begin; t < node.end; ++t) {
        int64_t id = vocab.lookup(tokens[static_cast<size_t>(t)]);
        if (id >= rows) throw_internal("bow_states: token id beyond the embedding table");
        for (int64_t k = 0; k < d_emb; ++k)
          v[static_cast<size_t>(k)] += table[static_cast<size_t>(id * d_emb + k)];
      }
      ds.states.push_back(std::move(v));
      ds.labels.push_back(label_id(ds, it->second));
    }
  };
  for (const auto& ex : examples) {
    one_side(ex.premise, ex.premise_labeled);
    one_side(ex.hypothesis, ex.hypothesis_labeled);
  }
  finish_dataset(ds, split_seed);
  return ds;
}

namespace {

struct Filtered {
  std::vector<int64_t> train;  // indices into the dataset
  std::vector<int64_t> test;
};

// softmax cross-entropy pieces for one example; returns probs
std::vector<double> predict_probs(const std::vector<double>& W, const std::vector<double>& b, int64_t C,
                                  int64_t D, const std::vector<double>& x) {
  std::vector<double> logits(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    double z = b[static_cast<size_t>(c)];
    const double* row = W.data() + c * D;
    for (int64_t k = 0; k < D; ++k) z += row[k] * x[static_cast<size_t>(k)];
    logits[static_cast<size_t>(c)] = z;
  }
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (auto& z : logits) {
    z = std::exp(z - mx);
    sum += z;
  }
  for (auto& z : logits) z /= sum;
  return logits;
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

ProbeResult train_probe(const ProbeDataset& ds, int mode, const ProbeConfig& config) {
  if (mode != 3 && mode != 19) throw_usage("probe mode must be 3 or 19, got " + std::to_string(mode));
  if (config.alpha <= 0 || config.max_epochs <= 0 || config.batch_size <= 0 || config.patience <= 0)
    throw_usage("probe config values must be positive");

  // classes actually present, by frequency then first appearance
  std::vector<int64_t> counts(ds.label_names.size(), 0);
  for (int l : ds.labels) ++counts[static_cast<size_t>(l)];

  std::vector<int> keep;  // original label ids the probe classifies over
  if (mode == 3) {
    for (const char* core : {"NP", "VP", "PP"})
      for (size_t i = 0; i < ds.label_names.size(); ++i)
        if (ds.label_names[i] == core && counts[i] > 0) keep.push_back(static_cast<int>(i));
    if (keep.size() < 2) {
      std::string have = keep.empty() ? "none" : ds.label_names[static_cast<size_t>(keep[0])];
      throw_data("3-way probe needs at least two of NP/VP/PP in the data, found " + have);
    }
  } else {
    int64_t beyond_core = 0;
    for (size_t i = 0; i < ds.label_names.size(); ++i) {
      if (counts[i] == 0) continue;
      const std::string& n = ds.label_names[i];
      if (n != "NP" && n != "VP" && n != "PP") ++beyond_core;
      keep.push_back(static_cast<int>(i));
    }
    if (beyond_core < 2)
      throw_data("19-way probe needs at least two categories beyond NP/VP/PP, found " +
                 std::to_string(beyond_core));
    std::stable_sort(keep.begin(), keep.end(), [&](int a, int b) {
      return counts[static_cast<size_t>(a)] > counts[static_cast<size_t>(b)];
    });
    if (keep.size() > 19) keep.resize(19);
  }

  ProbeResult out;
  std::vector<int> to_probe(ds.label_names.size(), -1);
  for (size_t c = 0; c < keep.size(); ++c) {
    to_probe[static_cast<size_t>(keep[c])] = static_cast<int>(c);
    out.classes.push_back(ds.label_names[static_cast<size_t>(keep[c])]);
  }

  Filtered f;
  for (int64_t i : ds.train_idx)
    if (to_probe[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])] >= 0) f.train.push_back(i);
  for (int64_t i : ds.test_idx)
    if (to_probe[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])] >= 0) f.test.push_back(i);

  {
    std::vector<bool> in_train(out.classes.size(), false);
    for (int64_t i : f.train)
      in_train[static_cast<size_t>(to_probe[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])])] = true;
    std::string missing;
    for (size_t c = 0; c < in_train.size(); ++c)
      if (!in_train[c]) missing += (missing.empty() ? "" : ", ") + out.classes[c];
    if (!missing.empty()) throw_data("class absent from training data: " + missing);
  }

  const int64_t C = static_cast<int64_t>(out.classes.size());
  const int64_t D = ds.width;
  out.width = D;
  out.n_train = static_cast<int64_t>(f.train.size());
  out.n_test = static_cast<int64_t>(f.test.size());

  if (f.train.empty()) throw_data("probe training split is empty");

  // held-out tail of the shuffled training part drives early stopping
  std::vector<int64_t> order = f.train;
  if (order.size() > 1) {
    Rng rng(Rng::mix(config.seed, 0x9E0Bu));
    for (size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(static_cast<uint64_t>(i + 1))]);
  }
  size_t n_held = std::max<size_t>(1, order.size() / 10);
  std::vector<int64_t> held(order.end() - static_cast<int64_t>(n_held), order.end());
  std::vector<int64_t> fit(order.begin(), order.end() - static_cast<int64_t>(n_held));
  if (fit.empty()) fit = held;  // degenerate tiny dataset

  ParameterStore<double> store;
  Rng init(Rng::mix(config.seed, 0x11CEu));
  Parameter<double>& W = store.create("probe.W", {C, D}, Init::Zero, init);
  Parameter<double>& b = store.create("probe.b", {C}, Init::Zero, init);
  AdamState<double> adam;
  adam.alpha = config.alpha;

  auto mean_loss = [&](const std::vector<int64_t>& idx) {
    double total = 0;
    for (int64_t i : idx) {
      auto probs = predict_probs(W.value.v, b.value.v, C, D, ds.states[static_cast<size_t>(i)]);
      int y = to_probe[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])];
      total += -std::log(std::max(probs[static_cast<size_t>(y)], 1e-300));
    }
    return total / static_cast<double>(idx.size());
  };

  std::vector<double> best_W = W.value.v, best_b = b.value.v;
  double best_loss = mean_loss(held);
  int64_t stale = 0;
  for (int64_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng shuffle(Rng::mix(config.seed, static_cast<uint64_t>(epoch) + 1));
    std::vector<int64_t> idx = fit;
    for (size_t i = idx.size() - 1; i > 0; --i)
      std::swap(idx[i], idx[shuffle.below(static_cast<uint64_t>(i + 1))]);
    for (size_t at = 0; at < idx.size(); at += static_cast<size_t>(config.batch_size)) {
      size_t hi = std::min(idx.size(), at + static_cast<size_t>(config.batch_size));
      std::fill(W.grad.v.begin(), W.grad.v.end(), 0.0);
      std::fill(b.grad.v.begin(), b.grad.v.end(), 0.0);
      double inv = 1.0 / static_cast<double>(hi - at);
      for (size_t j = at; j < hi; ++j) {
        const auto& x = ds.states[static_cast<size_t>(idx[j])];
        int y = to_probe[static_cast<size_t>(ds.labels[static_cast<size_t>(idx[j])])];
        auto probs = predict_probs(W.value.v, b.value.v, C, D, x);
        for (int64_t c = 0; c < C; ++c) {
          double g = (probs[static_cast<size_t>(c)] - (c == y ? 1.0 : 0.0)) * inv;
          b.grad.v[static_cast<size_t>(c)] += g;
          double* row = W.grad.v.data() + c * D;
          for (int64_t k = 0; k < D; ++k) row[k] += g * x[static_cast<size_t>(k)];
        }
      }
      adam_step(adam, store);
    }
    ++out.epochs_run;
    double held_loss = mean_loss(held);
    if (held_loss < best_loss) {
      best_loss = held_loss;
      best_W = W.value.v;
      best_b = b.value.v;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  out.W = std::move(best_W);
  out.b = std::move(best_b);

  auto accuracy = [&](const std::vector<int64_t>& idx) {
    if (idx.empty()) return 0.0;
    int64_t hit = 0;
    for (int64_t i : idx) {
      auto probs = predict_probs(out.W, out.b, C, D, ds.states[static_cast<size_t>(i)]);
      if (argmax(probs) == to_probe[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(idx.size());
  };
  out.train_accuracy = accuracy(f.train);
  out.test_accuracy = accuracy(f.test);

  // confusion over the most frequent test classes, rarer predictions pooled
  std::vector<int64_t> test_counts(static_cast<size_t>(C), 0);
  for (int64_t i : f.test)
    ++test_counts[static_cast<size_t>(to_probe[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])])];
  std::vector<int> by_freq;
  for (int c = 0; c < C; ++c)
    if (test_counts[static_cast<size_t>(c)] > 0) by_freq.push_back(c);
  std::stable_sort(by_freq.begin(), by_freq.end(), [&](int a, int b) {
    return test_counts[static_cast<size_t>(a)] > test_counts[static_cast<size_t>(b)];
  });
  size_t rows = std::min<size_t>(8, by_freq.size());
  std::vector<int> row_of(static_cast<size_t>(C), -1);
  for (size_t r = 0; r < rows; ++r) {
    row_of[static_cast<size_t>(by_freq[r])] = static_cast<int>(r);
    out.confusion_labels.push_back(out.classes[static_cast<size_t>(by_freq[r])]);
  }
  out.confusion_has_rest = rows < static_cast<size_t>(C);
  size_t cols = rows + (out.confusion_has_rest ? 1 : 0);
  out.confusion.assign(rows * cols, 0.0);
  std::vector<int64_t> row_total(rows, 0);
  for (int64_t i : f.test) {
    int y = to_probe[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])];
    if (row_of[static_cast<size_t>(y)] < 0) continue;
    auto probs = predict_probs(out.W, out.b, C, D, ds.states[static_cast<size_t>(i)]);
    int p = argmax(probs);
    int col = row_of[static_cast<size_t>(p)] >= 0 ? row_of[static_cast<size_t>(p)] : static_cast<int>(rows);
    size_t r = static_cast<size_t>(row_of[static_cast<size_t>(y)]);
    out.confusion[r * cols + static_cast<size_t>(col)] += 1.0;
    ++row_total[r];
  }
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) out.confusion[r * cols + c] /= static_cast<double>(row_total[r]);
  return out;
}

int probe_predict(const ProbeResult& probe, const std::vector<double>& state) {
  if (static_cast<int64_t>(state.size()) != probe.width)
    throw_usage("probe_predict: state width " + std::to_string(state.size()) + ", probe expects " +
                std::to_string(probe.width));
  auto probs = predict_probs(probe.W, probe.b, static_cast<int64_t>(probe.classes.size()), probe.width, state);
  return argmax(probs);
}

std::string probe_to_json(const ProbeResult& probe) {
  nlohmann::ordered_json j;
  j["classes"] = probe.classes;
  j["width"] = probe.width;
  j["W"] = probe.W;
  j["b"] = probe.b;
  j["train_accuracy"] = probe.train_accuracy;
  j["test_accuracy"] = probe.test_accuracy;
  j["n_train"] = probe.n_train;
  j["n_test"] = probe.n_test;
  j["epochs_run"] = probe.epochs_run;
  j["confusion_labels"] = probe.confusion_labels;
  j["confusion_has_rest"] = probe.confusion_has_rest;
  j["confusion"] = probe.confusion;
  return j.dump();
}

ProbeResult probe_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw_data(std::string("probe record: malformed JSON: ") + e.what());
  }
  ProbeResult p;
  try {
    p.classes = j.at("classes").get<std::vector<std::string>>();
    p.width = j.at("width").get<int64_t>();
    p.W = j.at("W").get<std::vector<double>>();
    p.b = j.at("b").get<std::vector<double>>();
    p.train_accuracy = j.value("train_accuracy", 0.0);
    p.test_accuracy = j.value("test_accuracy", 0.0);
    p.n_train = j.value("n_train", static_cast<int64_t>(0));
    p.n_test = j.value("n_test", static_cast<int64_t>(0));
    p.epochs_run = j.value("epochs_run", static_cast<int64_t>(0));
    p.confusion_labels = j.value("confusion_labels", std::vector<std::string>{});
    p.confusion_has_rest = j.value("confusion_has_rest", false);
    p.confusion = j.value("confusion", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw_data(std::string("probe record: missing or mistyped field: ") + e.what());
  }
  if (p.W.size() != p.classes.size() * static_cast<size_t>(p.width) || p.b.size() != p.classes.size())
    throw_data("probe record: weight shapes disagree with classes and width");
  return p;
}

}  // namespace lms
