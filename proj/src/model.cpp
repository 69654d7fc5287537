#include "lms/model.hpp"

namespace lms {

template <class T>
Model<T> make_model(const ComposerSpec& spec, int64_t vocab_size, int64_t n_classes, int64_t mlp_hidden,
                    bool pair_head, double dropout, double embed_dropout, bool fine_tune_embeddings, Rng& rng) {
  if (vocab_size < 1) throw_usage("model: vocab_size must be positive, got " + std::to_string(vocab_size));
  if (n_classes < 2) throw_usage("model: need at least 2 classes, got " + std::to_string(n_classes));
  if (mlp_hidden < 1) throw_usage("model: mlp_hidden must be positive, got " + std::to_string(mlp_hidden));
  if (dropout < 0.0 || dropout >= 1.0 || embed_dropout < 0.0 || embed_dropout >= 1.0)
    throw_usage("model: dropout rates must lie in [0, 1)");

  Model<T> model;
  model.spec = spec;
  model.spec.vocab_size = vocab_size;
  model.spec.validate();
  model.n_classes = n_classes;
  model.mlp_hidden = mlp_hidden;
  model.feature_width = pair_head ? 4 * spec.d : spec.d;
  model.dropout = dropout;
  model.embed_dropout = embed_dropout;

  bool fidelity_cms = spec.kind == ComposerKind::Cms && spec.cms_per_word;
  if (!fidelity_cms) {
    auto& emb = model.store.create("embed.table", Shape::mat(vocab_size, spec.d_emb), Init::Zero, rng,
                                   fine_tune_embeddings, false);
    for (auto& v : emb.value.v) v = static_cast<T>(rng.uniform(-0.1, 0.1));
  }
  make_composer_params(model.store, model.spec, rng);
  make_lift_params(model.store, model.spec, rng);

  int64_t in = model.feature_width;
  int64_t h = mlp_hidden;
  model.store.create("mlp.W1", Shape::mat(h, in), Init::Xavier, rng, true, true);
  model.store.create("mlp.b1", Shape::vec(h), Init::Zero, rng);
  model.store.create("mlp.ln1_g", Shape::vec(h), Init::One, rng);
  model.store.create("mlp.ln1_b", Shape::vec(h), Init::Zero, rng);
  model.store.create("mlp.W2", Shape::mat(h, h), Init::Xavier, rng, true, true);
  model.store.create("mlp.b2", Shape::vec(h), Init::Zero, rng);
  model.store.create("mlp.ln2_g", Shape::vec(h), Init::One, rng);
  model.store.create("mlp.ln2_b", Shape::vec(h), Init::Zero, rng);
  model.store.create("mlp.out_W", Shape::mat(n_classes, h), Init::Xavier, rng, true, true);
  model.store.create("mlp.out_b", Shape::vec(n_classes), Init::Zero, rng);
  return model;
}

template <class T>
LeafFn<T> model_leaf_fn(Model<T>& model, Rng* rng) {
  return [&model, rng](Tape<T>& tape, int64_t token_id, int64_t) -> NodeState<T> {
    if (model.spec.kind == ComposerKind::Cms && model.spec.cms_per_word)
      return leaf_state(tape, model.spec, model.store, Tensor<T>(), token_id);
    auto table = tape.use(model.store.get("embed.table"));
    auto emb = ops::row(tape, table, token_id);
    if (rng && model.embed_dropout > 0.0) emb = ops::dropout(tape, emb, model.embed_dropout, *rng);
    return leaf_state(tape, model.spec, model.store, emb, token_id);
  };
}

template <class T>
Tensor<T> encode(Tape<T>& tape, Model<T>& model, const Sentence& sentence, Rng* rng) {
  auto trace = run_single(tape, model.spec, model.store, sentence.ids, sentence.ops, model_leaf_fn(model, rng));
  auto root = trace.root().h;
  if (root.shape.rank == 2) root = ops::vectorize(tape, root);
  return root;
}

template <class T>
Tensor<T> pair_features(Tape<T>& tape, const Tensor<T>& h_premise, const Tensor<T>& h_hypothesis) {
  auto diff = ops::sub(tape, h_premise, h_hypothesis);
  auto prod = ops::hadamard(tape, h_premise, h_hypothesis);
  return ops::concat(tape, ops::concat(tape, h_premise, h_hypothesis), ops::concat(tape, diff, prod));
}

template <class T>
Tensor<T> mlp_logits(Tape<T>& tape, Model<T>& model, const Tensor<T>& x, Rng* rng) {
  if (x.shape != Shape::vec(model.feature_width))
    throw_usage("classifier: feature vector must be " + Shape::vec(model.feature_width).str() + ", got " +
                x.shape.str());
  auto& s = model.store;
  auto drop = [&](const Tensor<T>& t) {
    return (rng && model.dropout > 0.0) ? ops::dropout(tape, t, model.dropout, *rng) : t;
  };
  auto x0 = drop(x);
  auto z1 = ops::layer_norm(tape, ops::add(tape, ops::matvec(tape, tape.use(s.get("mlp.W1")), x0),
                                           tape.use(s.get("mlp.b1"))),
                            tape.use(s.get("mlp.ln1_g")), tape.use(s.get("mlp.ln1_b")));
  auto a1 = drop(ops::relu_(tape, z1));
  auto z2 = ops::layer_norm(tape, ops::add(tape, ops::matvec(tape, tape.use(s.get("mlp.W2")), a1),
                                           tape.use(s.get("mlp.b2"))),
                            tape.use(s.get("mlp.ln2_g")), tape.use(s.get("mlp.ln2_b")));
  auto a2 = drop(ops::relu_(tape, z2));
  return ops::add(tape, ops::matvec(tape, tape.use(s.get("mlp.out_W")), a2), tape.use(s.get("mlp.out_b")));
}

template <class T>
Tensor<T> classify_pair(Tape<T>& tape, Model<T>& model, const Sentence& premise, const Sentence& hypothesis,
                        Rng* rng) {
  if (model.feature_width != 4 * model.spec.d)
    throw_usage("classifier head was built for single sentences, not pairs");
  auto h_p = encode(tape, model, premise, rng);
  auto h_h = encode(tape, model, hypothesis, rng);
  return mlp_logits(tape, model, pair_features(tape, h_p, h_h), rng);
}

template <class T>
PairOutput<T> pair_loss(Tape<T>& tape, Model<T>& model, const Sentence& premise, const Sentence& hypothesis,
                        int label, Rng* rng) {
  auto logits = classify_pair(tape, model, premise, hypothesis, rng);
  PairOutput<T> out;
  out.loss = ops::softmax_cross_entropy(tape, logits, label, &out.probs);
  out.pred = ops::argmax_index(out.probs);
  return out;
}

std::vector<int> sst_node_labels(const ParseTree& tree) {
  std::vector<int> labels;
  labels.reserve(tree.nodes.size());
  // Mirrors the executor: children before parents, left before right.
  std::vector<std::pair<int, bool>> stack{{tree.root, false}};
  while (!stack.empty()) {
    auto [idx, expanded] = stack.back();
    stack.pop_back();
    const auto& n = tree.nodes[static_cast<size_t>(idx)];
    if (n.is_leaf() || expanded) {
      if (n.sentiment < 0)
        throw_data("sentiment tree: node over [" + std::to_string(n.begin) + ", " + std::to_string(n.end) +
                   ") has no label");
      labels.push_back(n.sentiment);
      continue;
    }
    stack.emplace_back(idx, true);
    stack.emplace_back(n.right, false);
    stack.emplace_back(n.left, false);
  }
  return labels;
}

template <class T>
SstOutput<T> classify_sst(Tape<T>& tape, Model<T>& model, const Sentence& sentence,
                          const std::vector<int>& node_labels, Rng* rng) {
  if (model.feature_width != model.spec.d)
    throw_usage("classifier head was built for sentence pairs, not single sentences");
  auto trace = run_single(tape, model.spec, model.store, sentence.ids, sentence.ops, model_leaf_fn(model, rng));
  if (node_labels.size() != trace.entries.size())
    throw_data("sentiment tree: " + std::to_string(node_labels.size()) + " labels for " +
               std::to_string(trace.entries.size()) + " nodes");
  SstOutput<T> out;
  out.node_count = static_cast<int64_t>(trace.entries.size());
  for (size_t i = 0; i < trace.entries.size(); ++i) {
    auto h = trace.entries[i].state.h;
    if (h.shape.rank == 2) h = ops::vectorize(tape, h);
    std::vector<T> probs;
    auto logits = mlp_logits(tape, model, h, rng);
    auto ce = ops::softmax_cross_entropy(tape, logits, node_labels[i], &probs);
    out.loss_sum = out.loss_sum.v.empty() ? ce : ops::add(tape, out.loss_sum, ce);
    if (i + 1 == trace.entries.size()) out.root_pred = ops::argmax_index(probs);
  }
  return out;
}

template Model<float> make_model<float>(const ComposerSpec&, int64_t, int64_t, int64_t, bool, double, double,
                                        bool, Rng&);
template Model<double> make_model<double>(const ComposerSpec&, int64_t, int64_t, int64_t, bool, double, double,
                                          bool, Rng&);
template LeafFn<float> model_leaf_fn<float>(Model<float>&, Rng*);
template LeafFn<double> model_leaf_fn<double>(Model<double>&, Rng*);
template Tensor<float> encode<float>(Tape<float>&, Model<float>&, const Sentence&, Rng*);
template Tensor<double> encode<double>(Tape<double>&, Model<double>&, const Sentence&, Rng*);
template Tensor<float> pair_features<float>(Tape<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> pair_features<double>(Tape<double>&, const Tensor<double>&, const Tensor<double>&);
template Tensor<float> mlp_logits<float>(Tape<float>&, Model<float>&, const Tensor<float>&, Rng*);
template Tensor<double> mlp_logits<double>(Tape<double>&, Model<double>&, const Tensor<double>&, Rng*);
template Tensor<float> classify_pair<float>(Tape<float>&, Model<float>&, const Sentence&, const Sentence&, Rng*);
template Tensor<double> classify_pair<double>(Tape<double>&, Model<double>&, const Sentence&, const Sentence&,
                                              Rng*);
template PairOutput<float> pair_loss<float>(Tape<float>&, Model<float>&, const Sentence&, const Sentence&, int,
                                            Rng*);
template PairOutput<double> pair_loss<double>(Tape<double>&, Model<double>&, const Sentence&, const Sentence&,
                                              int, Rng*);
template SstOutput<float> classify_sst<float>(Tape<float>&, Model<float>&, const Sentence&,
                                              const std::vector<int>&, Rng*);
template SstOutput<double> classify_sst<double>(Tape<double>&, Model<double>&, const Sentence&,
                                                const std::vector<int>&, Rng*);

}  // namespace lms
