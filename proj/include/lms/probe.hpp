#pragma once

#include "lms/data.hpp"

namespace lms {

// Constituent states paired with phrase categories, plus a materialized
// 80/20 split. Vectors all share one width; labels index label_names.
struct ProbeDataset {
  std::vector<std::vector<double>> states;
  std::vector<int> labels;
  std::vector<std::string> label_names;  // first-appearance order
  int64_t width = 0;
  uint64_t split_seed = 0;
  std::vector<int64_t> train_idx;
  std::vector<int64_t> test_idx;
  int64_t alignment_failures = 0;  // sentence sides that could not align
};

// Hidden state of every labeled constituent under the trained model, in eval
// mode (matrix states flattened row-major). Unlabeled spans are excluded;
// sides without a usable labeled parse count as alignment failures.
template <class T>
ProbeDataset collect_states(Model<T>& model, const std::vector<ExamplePair>& examples,
                            const Vocabulary& vocab, uint64_t split_seed);

// Baseline features: per labeled span, the sum of the token embedding rows.
ProbeDataset bow_states(const std::vector<double>& table, int64_t d_emb, const Vocabulary& vocab,
                        const std::vector<ExamplePair>& examples, uint64_t split_seed);

struct ProbeConfig {
  double alpha = 1e-2;
  int64_t max_epochs = 200;
  int64_t batch_size = 128;
  int64_t patience = 10;  // epochs without held-out loss improvement
  uint64_t seed = 0;
};

// Multinomial logistic probe. The confusion matrix covers the most frequent
// (up to 8) test classes; when rarer classes exist their predictions fold
// into one trailing "rest" column, so every row still sums to 1.
struct ProbeResult {
  std::vector<std::string> classes;
  int64_t width = 0;
  std::vector<double> W;  // [n_classes, width] row-major
  std::vector<double> b;
  double train_accuracy = 0;
  double test_accuracy = 0;
  int64_t n_train = 0;
  int64_t n_test = 0;
  int64_t epochs_run = 0;
  std::vector<std::string> confusion_labels;
  bool confusion_has_rest = false;
  std::vector<double> confusion;  // rows x (rows + has_rest), row-normalized
};

// mode 3: classify over whichever of NP/VP/PP the dataset contains (needs at
// least two). mode 19: all categories, capped at the 19 most frequent; needs
// at least two classes beyond the core three to engage.
ProbeResult train_probe(const ProbeDataset& dataset, int mode, const ProbeConfig& config);

int probe_predict(const ProbeResult& probe, const std::vector<double>& state);

// Weights plus the label-index map; parsing the result back reproduces
// identical predictions.
std::string probe_to_json(const ProbeResult& probe);
ProbeResult probe_from_json(const std::string& text);

}  // namespace lms
