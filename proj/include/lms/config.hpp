#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lms/composer.hpp"
#include "lms/optim.hpp"

namespace lms {

enum class Task { Nli, Sst, Synthetic };

const char* to_string(Task task);
Task task_from(const std::string& token);

// One run, fully described. Built from defaults, then a config file, then
// command-line overrides, in that order; later settings win. Every problem
// found while building (unknown keys, bad values, range violations) is
// collected and reported in a single usage error.
struct RunConfig {
  Task task = Task::Synthetic;
  ComposerKind composer = ComposerKind::TreeRnn;
  int64_t d = 64;
  int64_t d_emb = 64;
  int64_t mlp_hidden = 256;
  double dropout = 0.0;
  double embed_dropout = 0.0;

  double alpha = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda = 1e-5;
  double clip_norm = 0.0;
  int64_t batch_size = 32;
  int64_t epochs = 100;
  int64_t eval_every = 250;
  int64_t patience = 10;
  int64_t parallelism = 1;
  uint64_t seed = 0;
  int64_t max_train = 0;  // 0 keeps every training example

  std::string train_path;
  std::string dev_path;  // empty: every fifth training example becomes dev
  std::string eval_path;
  std::string embeddings_path;
  std::string checkpoint_path;
  std::string metrics_path;  // empty: metrics records go to stdout

  std::string precision = "double";  // or "float"
  std::string timing = "wall";       // "off" pins wall_seconds to 0 for byte-stable reruns
  bool fine_tune_embeddings = true;
  bool cms_per_word = false;

  // Corpus generation (gen-data only).
  int64_t n_examples = 2500;
  int64_t domain_size = 3;
  int64_t content_words = 10;
  int64_t modifier_words = 8;
  std::string out_path;

  int64_t n_classes() const;
  ComposerSpec composer_spec(int64_t vocab_size) const;
  TrainOptions train_options() const;

  // Canonical single-line JSON of every key, in declaration order. Echoed at
  // the top of metrics streams so a run records its own configuration.
  std::string echo() const;
};

// Known key names in declaration order.
std::vector<std::string> config_keys();

// Parses `key = value` lines; '#' lines and blank lines are skipped. Returns
// pairs in file order. Unreadable files and lines without '=' are usage
// errors naming the path and line.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

// Splits a command-line override of the form key=value.
std::pair<std::string, std::string> split_override(const std::string& kv);

// Defaults, then file entries, then overrides. All problems are reported at
// once in one usage error.
RunConfig make_run_config(const std::vector<std::pair<std::string, std::string>>& file_entries,
                          const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace lms
