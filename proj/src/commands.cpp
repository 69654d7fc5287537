#include "lms/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "lms/checkpoint.hpp"
#include "lms/data.hpp"
#include "lms/gradcheck.hpp"
#include "lms/probe.hpp"
#include "lms/synthetic.hpp"

namespace lms {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

// Every fifth example becomes dev; the task-level convention when no
// explicit dev path is configured.
template <class E>
void stride_split(std::vector<E>& all, std::vector<E>& train, std::vector<E>& dev) {
  for (size_t i = 0; i < all.size(); ++i) {
    if (i % 5 == 4)
      dev.push_back(std::move(all[i]));
    else
      train.push_back(std::move(all[i]));
  }
  all.clear();
}

Vocabulary vocabulary_from_tokens(std::vector<std::string> tokens, bool case_fold) {
  if (tokens.empty() || tokens[0] != "<unk>")
    throw_data("checkpoint vocabulary must begin with <unk>");
  Vocabulary v;
  v.tokens = std::move(tokens);
  v.case_fold = case_fold;
  for (size_t i = 0; i < v.tokens.size(); ++i) v.index.emplace(v.tokens[i], static_cast<int64_t>(i));
  return v;
}

// Architecture facts a checkpoint carries so eval and probe can rebuild the
// exact model without the original config.
struct ModelMeta {
  Task task = Task::Synthetic;
  ComposerSpec spec;
  int64_t mlp_hidden = 0;
  int64_t n_classes = 0;
  bool pair_head = true;
  bool fine_tune_embeddings = true;
  Vocabulary vocab;
};

std::string meta_json_for(const RunConfig& config, const Vocabulary& vocab, bool pair_head) {
  nlohmann::ordered_json m;
  m["task"] = to_string(config.task);
  m["composer"] = to_string(config.composer);
  m["d"] = config.d;
  m["d_emb"] = config.d_emb;
  m["mlp_hidden"] = config.mlp_hidden;
  m["cms_per_word"] = config.cms_per_word;
  m["pair_head"] = pair_head;
  m["n_classes"] = config.n_classes();
  m["fine_tune_embeddings"] = config.fine_tune_embeddings;
  m["case_fold"] = vocab.case_fold;
  m["vocab"] = vocab.tokens;
  return m.dump();
}

ModelMeta parse_meta(const std::string& meta_json, const std::string& path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(meta_json);
  } catch (const nlohmann::json::exception&) {
    throw_data(path + ": checkpoint meta is not valid JSON");
  }
  ModelMeta out;
  try {
    out.task = task_from(m.at("task").get<std::string>());
    out.spec.kind = composer_kind_from(m.at("composer").get<std::string>());
    out.spec.d = m.at("d").get<int64_t>();
    out.spec.d_emb = m.at("d_emb").get<int64_t>();
    out.spec.cms_per_word = m.at("cms_per_word").get<bool>();
    out.mlp_hidden = m.at("mlp_hidden").get<int64_t>();
    out.n_classes = m.at("n_classes").get<int64_t>();
    out.pair_head = m.at("pair_head").get<bool>();
    out.fine_tune_embeddings = m.at("fine_tune_embeddings").get<bool>();
    out.vocab = vocabulary_from_tokens(m.at("vocab").get<std::vector<std::string>>(),
                                       m.at("case_fold").get<bool>());
  } catch (const nlohmann::json::exception& e) {
    throw_data(path + ": checkpoint meta lacks a required field: " + e.what());
  }
  out.spec.vocab_size = out.vocab.size();
  return out;
}

template <class T>
Model<T> model_from_meta(const ModelMeta& meta, const std::string& path) {
  Rng rng(0);
  Model<T> model = make_model<T>(meta.spec, meta.vocab.size(), meta.n_classes, meta.mlp_hidden,
                                 meta.pair_head, 0.0, 0.0, meta.fine_tune_embeddings, rng);
  load_into(model.store, path);
  return model;
}

// ---------------------------------------------------------------------------
// gen-data

std::string class_balance(const std::vector<ExamplePair>& examples, const std::string& out_path) {
  int64_t counts[3] = {0, 0, 0};
  for (const auto& ex : examples)
    if (ex.label >= 0 && ex.label < 3) ++counts[ex.label];
  nlohmann::ordered_json j;
  j["examples"] = examples.size();
  j[label_to_string(kEntailment)] = counts[kEntailment];
  j[label_to_string(kContradiction)] = counts[kContradiction];
  j[label_to_string(kNeutral)] = counts[kNeutral];
  if (!out_path.empty()) j["out_path"] = out_path;
  return j.dump();
}

// ---------------------------------------------------------------------------
// train

struct PairData {
  std::vector<Sentence> premises;
  std::vector<Sentence> hypotheses;
  std::vector<int> labels;
};

PairData to_pair_data(const Vocabulary& vocab, const std::vector<ExamplePair>& examples) {
  PairData out;
  for (const auto& ex : examples) {
    out.premises.push_back(to_sentence(vocab, ex.premise, ex.premise_ops));
    out.hypotheses.push_back(to_sentence(vocab, ex.hypothesis, ex.hypothesis_ops));
    out.labels.push_back(ex.label);
  }
  return out;
}

struct SstData {
  std::vector<Sentence> sentences;
  std::vector<std::vector<int>> node_labels;
};

SstData to_sst_data(const Vocabulary& vocab, const std::vector<ParseTree>& trees) {
  SstData out;
  for (const auto& tree : trees) {
    out.sentences.push_back(to_sentence(vocab, tree, to_transitions(tree)));
    out.node_labels.push_back(sst_node_labels(tree));
  }
  return out;
}

template <class T>
void copy_pretrained(Model<T>& model, const Vocabulary& vocab) {
  auto& table = model.store.get("embed.table");
  if (static_cast<int64_t>(vocab.embeddings.size()) != table.value.shape.size())
    throw_internal("pretrained table size disagrees with the embedding parameter");
  for (size_t i = 0; i < vocab.embeddings.size(); ++i)
    table.value.v[i] = static_cast<T>(vocab.embeddings[i]);
}

template <class T>
std::string run_train(const RunConfig& config, const LineSink& out) {
  if (config.train_path.empty()) throw_usage("train_path is required for train");
  if (config.checkpoint_path.empty()) throw_usage("checkpoint_path is required for train");

  // Metrics go to the configured file when set, else to the caller's sink.
  std::ofstream metrics_file;
  if (!config.metrics_path.empty()) {
    metrics_file.open(config.metrics_path, std::ios::trunc);
    if (!metrics_file) throw_data("cannot write metrics file " + config.metrics_path);
  }
  auto emit_metrics = [&](const std::string& line) {
    if (metrics_file.is_open())
      metrics_file << line << "\n";
    else
      out(line);
  };
  emit_metrics("{\"config\": " + config.echo() + "}");

  bool pair_task = config.task != Task::Sst;

  std::vector<ExamplePair> train_pairs, dev_pairs;
  std::vector<ParseTree> train_trees, dev_trees;
  int64_t skipped = 0;
  if (pair_task) {
    NliLoad load = load_nli(config.train_path, false);
    skipped = load.skipped_unlabeled + load.skipped_malformed;
    train_pairs = std::move(load.examples);
    if (!config.dev_path.empty()) {
      NliLoad dev_load = load_nli(config.dev_path, false);
      dev_pairs = std::move(dev_load.examples);
    } else {
      std::vector<ExamplePair> all = std::move(train_pairs);
      train_pairs.clear();
      stride_split(all, train_pairs, dev_pairs);
    }
    if (config.max_train > 0 && static_cast<int64_t>(train_pairs.size()) > config.max_train)
      train_pairs.resize(static_cast<size_t>(config.max_train));
    if (train_pairs.empty()) throw_data(config.train_path + ": no usable training examples");
  } else {
    train_trees = load_sst(config.train_path);
    if (!config.dev_path.empty()) {
      dev_trees = load_sst(config.dev_path);
    } else {
      std::vector<ParseTree> all = std::move(train_trees);
      train_trees.clear();
      stride_split(all, train_trees, dev_trees);
    }
    if (config.max_train > 0 && static_cast<int64_t>(train_trees.size()) > config.max_train)
      train_trees.resize(static_cast<size_t>(config.max_train));
    if (train_trees.empty()) throw_data(config.train_path + ": no usable training examples");
  }

  std::vector<std::string> corpus_tokens;
  if (pair_task) {
    corpus_tokens = collect_pair_tokens(train_pairs);
  } else {
    for (const auto& tree : train_trees)
      for (auto& tok : tree.tokens()) corpus_tokens.push_back(std::move(tok));
  }

  Vocabulary vocab;
  bool pretrained = !config.embeddings_path.empty();
  if (pretrained) {
    if (config.cms_per_word) throw_usage("cms_per_word learns per-word matrices; embeddings_path does not apply");
    Rng unk_rng(Rng::mix(config.seed, 0xE3B0u));
    vocab = load_embeddings(config.embeddings_path, corpus_tokens, true, unk_rng);
    if (vocab.d_emb != config.d_emb)
      throw_usage("d_emb is " + std::to_string(config.d_emb) + " but the embedding table is " +
                  std::to_string(vocab.d_emb) + " wide");
  } else {
    vocab = build_vocabulary(corpus_tokens, false);
  }

  Rng init_rng(Rng::mix(config.seed, 0x1217u));
  Model<T> model = make_model<T>(config.composer_spec(vocab.size()), vocab.size(), config.n_classes(),
                                 config.mlp_hidden, pair_task, config.dropout, config.embed_dropout,
                                 config.fine_tune_embeddings, init_rng);
  if (pretrained) copy_pretrained(model, vocab);

  PairData train_pd, dev_pd;
  SstData train_sd, dev_sd;
  int64_t n_train = 0, n_dev = 0;
  if (pair_task) {
    train_pd = to_pair_data(vocab, train_pairs);
    dev_pd = to_pair_data(vocab, dev_pairs);
    n_train = static_cast<int64_t>(train_pd.labels.size());
    n_dev = static_cast<int64_t>(dev_pd.labels.size());
  } else {
    train_sd = to_sst_data(vocab, train_trees);
    dev_sd = to_sst_data(vocab, dev_trees);
    n_train = static_cast<int64_t>(train_sd.sentences.size());
    n_dev = static_cast<int64_t>(dev_sd.sentences.size());
  }

  {
    nlohmann::ordered_json sizes;
    sizes["train_size"] = n_train;
    sizes["dev_size"] = n_dev;
    sizes["vocab_size"] = vocab.size();
    sizes["skipped"] = skipped;
    emit_metrics(sizes.dump());
  }

  std::string meta = meta_json_for(config, vocab, pair_task);
  auto t0 = std::chrono::steady_clock::now();

  TrainCallbacks<T> cb;
  cb.example_loss = [&](Tape<T>& tape, size_t i, Rng* rng) -> Tensor<T> {
    if (pair_task)
      return pair_loss(tape, model, train_pd.premises[i], train_pd.hypotheses[i], train_pd.labels[i], rng)
          .loss;
    return classify_sst(tape, model, train_sd.sentences[i], train_sd.node_labels[i], rng).loss_sum;
  };
  cb.dev_accuracy = [&]() -> double {
    if (n_dev == 0) return 0.0;
    int64_t correct = 0;
    for (int64_t i = 0; i < n_dev; ++i) {
      Tape<T> tape;
      size_t u = static_cast<size_t>(i);
      if (pair_task) {
        auto res = pair_loss(tape, model, dev_pd.premises[u], dev_pd.hypotheses[u], dev_pd.labels[u],
                             nullptr);
        correct += res.pred == dev_pd.labels[u];
      } else {
        auto res = classify_sst(tape, model, dev_sd.sentences[u], dev_sd.node_labels[u], nullptr);
        correct += res.root_pred == dev_sd.node_labels[u].back();
      }
    }
    return static_cast<double>(correct) / static_cast<double>(n_dev);
  };
  cb.on_best = [&](int64_t, double) { save_checkpoint(config.checkpoint_path, model.store, meta); };
  cb.emit = emit_metrics;

  TrainResult res = train_loop(model.store, n_train, config.train_options(), cb);

  nlohmann::ordered_json summary;
  summary["done"] = true;
  summary["steps"] = res.steps;
  summary["evals"] = res.evals;
  summary["best_dev"] = res.best_dev;
  summary["best_step"] = res.best_step;
  summary["early_stopped"] = res.early_stopped;
  summary["checkpoint_path"] = config.checkpoint_path;
  summary["wall_seconds"] = config.timing == "wall" ? seconds_since(t0) : 0.0;
  std::string line = summary.dump();
  emit_metrics(line);
  if (metrics_file.is_open()) out(line);
  return line;
}

// ---------------------------------------------------------------------------
// eval

template <class T>
std::string run_eval(const RunConfig& config, const LineSink& out) {
  LoadedCheckpoint<T> ck = load_checkpoint<T>(config.checkpoint_path);
  ModelMeta meta = parse_meta(ck.meta_json, config.checkpoint_path);
  Model<T> model = model_from_meta<T>(meta, config.checkpoint_path);

  int64_t n_classes = meta.n_classes;
  std::vector<int64_t> gold(n_classes, 0), predicted(n_classes, 0), correct(n_classes, 0);
  int64_t total = 0, right = 0;

  if (meta.task != Task::Sst) {
    NliLoad load = load_nli(config.eval_path, false);
    if (load.examples.empty()) throw_data(config.eval_path + ": no usable examples to evaluate");
    PairData pd = to_pair_data(meta.vocab, load.examples);
    for (size_t i = 0; i < pd.labels.size(); ++i) {
      Tape<T> tape;
      auto res = pair_loss(tape, model, pd.premises[i], pd.hypotheses[i], pd.labels[i], nullptr);
      ++gold[static_cast<size_t>(pd.labels[i])];
      ++predicted[static_cast<size_t>(res.pred)];
      if (res.pred == pd.labels[i]) {
        ++correct[static_cast<size_t>(pd.labels[i])];
        ++right;
      }
      ++total;
    }
  } else {
    std::vector<ParseTree> trees = load_sst(config.eval_path);
    if (trees.empty()) throw_data(config.eval_path + ": no usable examples to evaluate");
    SstData sd = to_sst_data(meta.vocab, trees);
    for (size_t i = 0; i < sd.sentences.size(); ++i) {
      Tape<T> tape;
      auto res = classify_sst(tape, model, sd.sentences[i], sd.node_labels[i], nullptr);
      int label = sd.node_labels[i].back();
      ++gold[static_cast<size_t>(label)];
      ++predicted[static_cast<size_t>(res.root_pred)];
      if (res.root_pred == label) {
        ++correct[static_cast<size_t>(label)];
        ++right;
      }
      ++total;
    }
  }

  for (int64_t c = 0; c < n_classes; ++c) {
    nlohmann::ordered_json row;
    row["class"] = meta.task != Task::Sst ? label_to_string(static_cast<int>(c)) : std::to_string(c);
    row["gold"] = gold[static_cast<size_t>(c)];
    row["predicted"] = predicted[static_cast<size_t>(c)];
    row["correct"] = correct[static_cast<size_t>(c)];
    out(row.dump());
  }
  double acc = total ? static_cast<double>(right) / static_cast<double>(total) : 0.0;
  std::string line = "{\"accuracy\": " + fmt4(acc) + ", \"correct\": " + std::to_string(right) +
                     ", \"total\": " + std::to_string(total) + "}";
  out(line);
  return line;
}

// ---------------------------------------------------------------------------
// probe

nlohmann::ordered_json probe_report(const char* mode, const char* features, const ProbeResult& r) {
  nlohmann::ordered_json j;
  j["probe"] = mode;
  j["features"] = features;
  j["train_accuracy"] = r.train_accuracy;
  j["test_accuracy"] = r.test_accuracy;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["classes"] = r.classes;
  return j;
}

nlohmann::ordered_json confusion_report(const char* mode, const char* features, const ProbeResult& r) {
  nlohmann::ordered_json j;
  j["probe"] = mode;
  j["features"] = features;
  j["confusion_labels"] = r.confusion_labels;
  j["has_rest"] = r.confusion_has_rest;
  size_t rows = r.confusion_labels.size();
  size_t cols = rows + (r.confusion_has_rest ? 1 : 0);
  nlohmann::ordered_json grid = nlohmann::ordered_json::array();
  for (size_t i = 0; i < rows; ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (size_t k = 0; k < cols; ++k) row.push_back(r.confusion[i * cols + k]);
    grid.push_back(std::move(row));
  }
  j["rows"] = std::move(grid);
  return j;
}

template <class T>
std::string run_probe(const RunConfig& config, const LineSink& out) {
  LoadedCheckpoint<T> ck = load_checkpoint<T>(config.checkpoint_path);
  ModelMeta meta = parse_meta(ck.meta_json, config.checkpoint_path);
  if (meta.task == Task::Sst) throw_usage("probe needs a sentence-pair checkpoint");
  Model<T> model = model_from_meta<T>(meta, config.checkpoint_path);
  if (meta.spec.cms_per_word)
    throw_data("the bag-of-words baseline needs an embedding table; this checkpoint has none");

  NliLoad load = load_nli(config.train_path, false);
  if (load.examples.empty()) throw_data(config.train_path + ": no usable examples to probe");

  ProbeDataset composer_ds;
  try {
    composer_ds = collect_states(model, load.examples, meta.vocab, config.seed);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Data)
      throw_data(std::string(e.what()) +
                 " (the corpus must carry labeled parses in sentence1_parse/sentence2_parse)");
    throw;
  }
  const auto& table_param = model.store.get("embed.table");
  std::vector<double> table(table_param.value.v.begin(), table_param.value.v.end());
  ProbeDataset bow_ds = bow_states(table, meta.spec.d_emb, meta.vocab, load.examples, config.seed);

  if (composer_ds.alignment_failures > 0)
    out("{\"alignment_failures\": " + std::to_string(composer_ds.alignment_failures) + "}");

  ProbeConfig pc;
  pc.seed = config.seed;

  nlohmann::ordered_json summary;
  summary["probe"] = "summary";
  summary["alignment_failures"] = composer_ds.alignment_failures;

  int64_t beyond_core = 0;
  for (const auto& name : composer_ds.label_names)
    if (name != "NP" && name != "VP" && name != "PP") ++beyond_core;

  for (int mode : {3, 19}) {
    const char* mode_name = mode == 3 ? "3way" : "19way";
    if (mode == 19 && beyond_core < 2) {
      out(std::string("{\"probe\": \"19way\", \"skipped\": \"needs at least two categories beyond "
                      "NP/VP/PP, found ") +
          std::to_string(beyond_core) + "\"}");
      summary["19way"] = nullptr;
      continue;
    }
    ProbeResult composer_r = train_probe(composer_ds, mode, pc);
    ProbeResult bow_r = train_probe(bow_ds, mode, pc);
    out(probe_report(mode_name, "composer", composer_r).dump());
    out(probe_report(mode_name, "bow", bow_r).dump());
    out(confusion_report(mode_name, "composer", composer_r).dump());
    out(confusion_report(mode_name, "bow", bow_r).dump());
    nlohmann::ordered_json pair;
    pair["composer"] = composer_r.test_accuracy;
    pair["bow"] = bow_r.test_accuracy;
    summary[mode_name] = std::move(pair);
  }

  std::string line = summary.dump();
  out(line);
  return line;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradRow {
  std::string kind;  // empty for kind-independent units
  int64_t d = 0;
  std::string unit;
  std::string label() const { return (kind.empty() ? unit : kind + "/" + unit) + " d=" + std::to_string(d); }
};

void emit_grad_row(const LineSink& out, const GradRow& row, const GradCheckReport& rep) {
  nlohmann::ordered_json j;
  if (row.kind.empty())
    j["kind"] = nullptr;
  else
    j["kind"] = row.kind;
  j["d"] = row.d;
  j["unit"] = row.unit;
  j["coords"] = rep.coords_checked;
  j["max_rel_err"] = rep.max_rel_err;
  j["worst_coord"] = rep.worst_coord;
  j["ok"] = rep.ok;
  out(j.dump());
}

std::vector<Tensor<double>> fixed_embeddings(int64_t n, int64_t width, Rng& rng) {
  std::vector<Tensor<double>> out;
  for (int64_t i = 0; i < n; ++i) {
    Tensor<double> e(Shape::vec(width));
    for (auto& v : e.v) v = rng.uniform(-0.9, 0.9);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

std::string cmd_gen_data(const RunConfig& config, const LineSink& out) {
  if (config.out_path.empty()) throw_usage("out_path is required for gen-data");
  SyntheticConfig sc;
  sc.n_examples = config.n_examples;
  sc.seed = config.seed;
  sc.domain_size = config.domain_size;
  sc.content_words = config.content_words;
  sc.modifier_words = config.modifier_words;
  SyntheticCorpus corpus = gen_synthetic(sc);
  write_nli(corpus, config.out_path);
  std::string line = class_balance(corpus.examples, config.out_path);
  out(line);
  return line;
}

std::string cmd_train(const RunConfig& config, const LineSink& out) {
  if (config.precision == "float") return run_train<float>(config, out);
  return run_train<double>(config, out);
}

std::string cmd_eval(const RunConfig& config, const LineSink& out) {
  if (config.checkpoint_path.empty()) throw_usage("checkpoint_path is required for eval");
  if (config.eval_path.empty()) throw_usage("eval_path is required for eval");
  if (checkpoint_precision(config.checkpoint_path) == "float") return run_eval<float>(config, out);
  return run_eval<double>(config, out);
}

std::string cmd_probe(const RunConfig& config, const LineSink& out) {
  if (config.checkpoint_path.empty()) throw_usage("checkpoint_path is required for probe");
  if (config.train_path.empty()) throw_usage("train_path (the corpus to probe) is required for probe");
  if (checkpoint_precision(config.checkpoint_path) == "float") return run_probe<float>(config, out);
  return run_probe<double>(config, out);
}

std::string cmd_gradcheck(const GradCheckRequest& request, const LineSink& out) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> kinds = request.kinds.empty() ? composer_kind_tokens() : request.kinds;
  for (const auto& k : kinds) composer_kind_from(k);
  for (int64_t d : request.dims)
    if (d <= 0) throw_usage("gradcheck dims must be positive, got " + std::to_string(d));
  if (!(request.tolerance > 0)) throw_usage("tolerance must be positive");
  for (const auto& k : kinds)
    for (int64_t d : request.dims) {
      ComposerSpec probe;
      probe.kind = composer_kind_from(k);
      probe.d = d;
      probe.d_emb = 3;
      probe.vocab_size = 3;
      probe.validate();
    }

  double global_max = 0.0;
  int64_t n_rows = 0;
  std::string first_failure;
  uint64_t row_seq = 0;

  auto run_row = [&](const GradRow& row, ParameterStore<double>& store,
                     const std::function<double(bool)>& loss) {
    Rng crng(Rng::mix(request.seed, ++row_seq));
    condition_for_gradcheck(store, crng);
    bool sabotaged = !request.sabotage.empty() && row.label().find(request.sabotage) != std::string::npos;
    auto checked_loss = [&store, &loss, sabotaged](bool do_backward) -> double {
      double v = loss(do_backward);
      if (sabotaged && do_backward) {
        for (auto& p : store.items()) {
          if (!p->trainable || p->value.v.empty()) continue;
          p->grad.v[0] += 0.37;  // a backward rule gone wrong
          break;
        }
      }
      return v;
    };
    GradCheckReport rep = check_gradients<double>(store, checked_loss, 1e-5, request.tolerance);
    emit_grad_row(out, row, rep);
    ++n_rows;
    global_max = std::max(global_max, rep.max_rel_err);
    if (!rep.ok && first_failure.empty()) first_failure = row.label();
  };

  for (int64_t d : request.dims) {
    // A composition in isolation: three fixed leaf embeddings, two reduces.
    for (const auto& kind_token : kinds) {
      ComposerSpec spec;
      spec.kind = composer_kind_from(kind_token);
      spec.d = d;
      spec.d_emb = 3;
      spec.vocab_size = 3;
      ParameterStore<double> store;
      Rng prng(Rng::mix(request.seed, 0xC0DEu));
      make_composer_params(store, spec, prng);
      make_lift_params(store, spec, prng);
      Rng erng(Rng::mix(request.seed, d));
      auto embeds = fixed_embeddings(3, spec.d_emb, erng);
      auto loss = [&](bool do_backward) -> double {
        Tape<double> tape;
        NodeState<double> a = leaf_state(tape, spec, store, tape.input(embeds[0]), 0);
        NodeState<double> b = leaf_state(tape, spec, store, tape.input(embeds[1]), 1);
        NodeState<double> c = leaf_state(tape, spec, store, tape.input(embeds[2]), 2);
        NodeState<double> ab = compose(tape, spec, store, a, b);
        NodeState<double> root = compose(tape, spec, store, ab, c);
        Tensor<double> l = ops::sum(tape, root.h);
        if (do_backward) tape.backward(l);
        return l.v[0];
      };
      run_row({kind_token, d, "composer"}, store, loss);
    }

    // The lift layer alone (embedding to matrix state).
    {
      ComposerSpec spec;
      spec.kind = ComposerKind::LmsBase;
      spec.d = d;
      spec.d_emb = 3;
      ParameterStore<double> store;
      Rng prng(Rng::mix(request.seed, 0x11F7u));
      make_lift_params(store, spec, prng);
      Rng erng(Rng::mix(request.seed, d + 101));
      auto embeds = fixed_embeddings(1, spec.d_emb, erng);
      auto loss = [&](bool do_backward) -> double {
        Tape<double> tape;
        Tensor<double> lifted = lift(tape, store, spec, tape.input(embeds[0]));
        Tensor<double> l = ops::sum(tape, lifted);
        if (do_backward) tape.backward(l);
        return l.v[0];
      };
      run_row({"", d, "lift"}, store, loss);
    }

    // The classifier head on a constant feature vector; other parameters see
    // zero analytic and zero numeric gradients, so only the head is exercised.
    {
      Rng mrng(Rng::mix(request.seed, 0x6EADu));
      ComposerSpec spec;
      spec.kind = ComposerKind::TreeRnn;
      spec.d = d;
      spec.d_emb = 2;
      Model<double> model = make_model<double>(spec, 2, 3, 8, true, 0.0, 0.0, true, mrng);
      Rng xrng(Rng::mix(request.seed, d + 202));
      auto features = fixed_embeddings(1, model.feature_width, xrng);
      auto loss = [&](bool do_backward) -> double {
        Tape<double> tape;
        Tensor<double> logits = mlp_logits(tape, model, tape.input(features[0]), nullptr);
        Tensor<double> l = ops::softmax_cross_entropy(tape, logits, 1);
        if (do_backward) tape.backward(l);
        return l.v[0];
      };
      run_row({"", d, "head"}, model.store, loss);
    }

    // The whole pair model end to end: embeddings, leaves, composition,
    // features, head.
    for (const auto& kind_token : kinds) {
      ComposerSpec spec;
      spec.kind = composer_kind_from(kind_token);
      spec.d = d;
      spec.d_emb = d;
      Rng mrng(Rng::mix(request.seed, 0xFA17u));
      Model<double> model = make_model<double>(spec, 5, 3, 8, true, 0.0, 0.0, true, mrng);
      Sentence premise{{1, 2, 3},
                       {Transition::Shift, Transition::Shift, Transition::Reduce, Transition::Shift,
                        Transition::Reduce}};
      Sentence hypothesis{{2, 4}, {Transition::Shift, Transition::Shift, Transition::Reduce}};
      auto loss = [&](bool do_backward) -> double {
        Tape<double> tape;
        Tensor<double> l = pair_loss(tape, model, premise, hypothesis, 1, nullptr).loss;
        if (do_backward) tape.backward(l);
        return l.v[0];
      };
      run_row({kind_token, d, "pair_model"}, model.store, loss);
    }
  }

  nlohmann::ordered_json summary;
  summary["ok"] = first_failure.empty();
  summary["rows"] = n_rows;
  summary["max_rel_err"] = global_max;
  summary["tolerance"] = request.tolerance;
  summary["seconds"] = seconds_since(t0);
  std::string line = summary.dump();
  out(line);
  if (!first_failure.empty())
    throw_verify("gradient check failed for " + first_failure + "; max relative error " +
                 std::to_string(global_max));
  return line;
}

std::string cmd_paramcount(const ParamCountRequest& request, const LineSink& out) {
  ComposerSpec spec;
  spec.kind = composer_kind_from(request.kind);
  spec.d = request.d;
  spec.d_emb = request.d_emb;
  spec.vocab_size = request.vocab;
  spec.cms_per_word = request.cms_per_word;
  spec.validate();
  if (request.vocab <= 0) throw_usage("vocab must be positive, got " + std::to_string(request.vocab));
  if (request.mlp_hidden <= 0) throw_usage("mlp_hidden must be positive");
  if (request.n_classes < 2) throw_usage("n_classes must be at least 2");

  bool fidelity_cms = spec.kind == ComposerKind::Cms && spec.cms_per_word;
  std::vector<ParamCountEntry> entries;
  if (!fidelity_cms) entries.push_back({"embed.table", request.vocab * request.d_emb});
  int64_t composition_plus_lift = 0;
  for (const auto& e : param_count_entries(spec)) {
    composition_plus_lift += e.count;
    entries.push_back(e);
  }
  int64_t leaf = 0;
  if (!spec.matrix_hidden()) {
    entries.push_back({"leaf.W", spec.d * spec.d_emb});
    entries.push_back({"leaf.b", spec.d});
    leaf = spec.d * spec.d_emb + spec.d;
  }
  int64_t f = request.pair_head ? 4 * spec.d : spec.d;
  int64_t h = request.mlp_hidden;
  int64_t c = request.n_classes;
  entries.push_back({"mlp.W1", h * f});
  entries.push_back({"mlp.b1", h});
  entries.push_back({"mlp.ln1_g", h});
  entries.push_back({"mlp.ln1_b", h});
  entries.push_back({"mlp.W2", h * h});
  entries.push_back({"mlp.b2", h});
  entries.push_back({"mlp.ln2_g", h});
  entries.push_back({"mlp.ln2_b", h});
  entries.push_back({"mlp.out_W", c * h});
  entries.push_back({"mlp.out_b", c});
  int64_t head = h * f + h * h + c * h + 6 * h + c;

  int64_t total = 0;
  for (const auto& e : entries) {
    total += e.count;
    nlohmann::ordered_json row;
    row["parameter"] = e.name;
    row["count"] = e.count;
    out(row.dump());
  }

  nlohmann::ordered_json summary;
  summary["kind"] = request.kind;
  summary["d"] = spec.d;
  summary["d_emb"] = spec.d_emb;
  summary["vocab"] = request.vocab;
  summary["composition_plus_lift"] = composition_plus_lift;
  summary["leaf"] = leaf;
  summary["embeddings"] = fidelity_cms ? 0 : request.vocab * request.d_emb;
  summary["classifier_head"] = head;
  summary["total"] = total;
  summary["asymptotic"] = asymptotic_class(spec.kind, spec.cms_per_word);
  std::string line = summary.dump();
  out(line);
  return line;
}

std::string cmd_bench(const BenchRequest& request, const LineSink& out) {
  if (request.reps < 1) throw_usage("reps must be at least 1");
  if (request.compositions < 1) throw_usage("compositions must be at least 1");
  std::vector<std::string> kinds = request.kinds.empty() ? composer_kind_tokens() : request.kinds;
  for (const auto& k : kinds) composer_kind_from(k);
  std::sort(kinds.begin(), kinds.end());
  kinds.erase(std::unique(kinds.begin(), kinds.end()), kinds.end());
  std::vector<int64_t> dims = request.dims;
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  for (const auto& kind_token : kinds)
    for (int64_t d : dims) {
      ComposerSpec probe;
      probe.kind = composer_kind_from(kind_token);
      probe.d = d;
      probe.d_emb = 3;
      probe.vocab_size = 2;
      probe.validate();
    }

  nlohmann::ordered_json results;
  for (const auto& kind_token : kinds) {
    nlohmann::ordered_json per_d;
    for (int64_t d : dims) {
      ComposerSpec spec;
      spec.kind = composer_kind_from(kind_token);
      spec.d = d;
      spec.d_emb = 3;
      spec.vocab_size = 2;
      spec.validate();
      ParameterStore<double> store;
      Rng prng(Rng::mix(request.seed, static_cast<uint64_t>(d)));
      make_composer_params(store, spec, prng);

      Rng srng(Rng::mix(request.seed, static_cast<uint64_t>(d) + 7919));
      std::vector<NodeState<double>> children;
      for (int64_t i = 0; i <= request.compositions; ++i)
        children.push_back(random_child_state<double>(spec, srng));

      std::vector<double> times;
      for (int64_t rep = 0; rep < request.reps; ++rep) {
        store.zero_grads();
        auto t0 = std::chrono::steady_clock::now();
        Tape<double> tape;
        NodeState<double> acc = track_state(tape, children[0]);
        for (int64_t i = 1; i <= request.compositions; ++i)
          acc = compose(tape, spec, store, acc, track_state(tape, children[static_cast<size_t>(i)]));
        Tensor<double> l = ops::sum(tape, acc.h);
        tape.backward(l);
        times.push_back(seconds_since(t0));
      }
      std::sort(times.begin(), times.end());
      size_t n = times.size();
      double median = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
      double per_comp = median / static_cast<double>(request.compositions);

      nlohmann::ordered_json row;
      row["kind"] = kind_token;
      row["d"] = d;
      row["reps"] = request.reps;
      row["compositions"] = request.compositions;
      row["median_seconds_per_composition"] = per_comp;
      out(row.dump());
      per_d[std::to_string(d)] = per_comp;
    }
    results[kind_token] = std::move(per_d);
  }
  nlohmann::ordered_json summary;
  summary["bench"] = std::move(results);
  std::string line = summary.dump();
  out(line);
  return line;
}

}  // namespace lms
