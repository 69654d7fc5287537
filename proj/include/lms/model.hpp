#pragma once

#include "lms/executor.hpp"
#include "lms/lift.hpp"

namespace lms {

// Token ids plus the gold shift/reduce program for one sentence.
struct Sentence {
  std::vector<int64_t> ids;
  std::vector<Transition> ops;
};

// Encoder plus MLP classifier head. Training mode is signaled per call by a
// non-null dropout rng; with nullptr every path is deterministic.
template <class T>
struct Model {
  ComposerSpec spec;
  int64_t n_classes = 3;
  int64_t mlp_hidden = 256;
  int64_t feature_width = 0;  // 4d for sentence pairs, d for single sentences
  double dropout = 0.0;
  double embed_dropout = 0.0;
  ParameterStore<T> store;
};

template <class T>
Model<T> make_model(const ComposerSpec& spec, int64_t vocab_size, int64_t n_classes, int64_t mlp_hidden,
                    bool pair_head, double dropout, double embed_dropout, bool fine_tune_embeddings, Rng& rng);

template <class T>
LeafFn<T> model_leaf_fn(Model<T>& model, Rng* rng);

// Root hidden state as a length-d vector (matrix states are flattened).
template <class T>
Tensor<T> encode(Tape<T>& tape, Model<T>& model, const Sentence& sentence, Rng* rng);

// [h_p; h_h; h_p - h_h; h_p .* h_h]
template <class T>
Tensor<T> pair_features(Tape<T>& tape, const Tensor<T>& h_premise, const Tensor<T>& h_hypothesis);

template <class T>
Tensor<T> mlp_logits(Tape<T>& tape, Model<T>& model, const Tensor<T>& x, Rng* rng);

template <class T>
Tensor<T> classify_pair(Tape<T>& tape, Model<T>& model, const Sentence& premise, const Sentence& hypothesis,
                        Rng* rng);

template <class T>
struct PairOutput {
  Tensor<T> loss;
  std::vector<T> probs;
  int pred = -1;
};

template <class T>
PairOutput<T> pair_loss(Tape<T>& tape, Model<T>& model, const Sentence& premise, const Sentence& hypothesis,
                        int label, Rng* rng);

// Sentiment labels in executor push order (post-order of the tree).
std::vector<int> sst_node_labels(const ParseTree& tree);

template <class T>
struct SstOutput {
  Tensor<T> loss_sum;  // cross-entropy summed over all labeled nodes
  int root_pred = -1;
  int64_t node_count = 0;
};

template <class T>
SstOutput<T> classify_sst(Tape<T>& tape, Model<T>& model, const Sentence& sentence,
                          const std::vector<int>& node_labels, Rng* rng);

}  // namespace lms
