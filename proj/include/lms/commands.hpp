#pragma once

#include <functional>

#include "lms/config.hpp"

namespace lms {

// Streaming record consumer. Commands emit one self-contained JSON object per
// line; the CLI prints them, the C API collects them.
using LineSink = std::function<void(const std::string&)>;

// Each command returns its final summary as one JSON object (also emitted
// through the sink) and reports failures by throwing Error; callers map the
// error kind to an exit code.

// Writes a synthetic corpus in the NLI line format and reports class balance.
std::string cmd_gen_data(const RunConfig& config, const LineSink& out);

// Trains per the config, streaming metrics records (to metrics_path when set,
// else through the sink) and saving the best-dev checkpoint.
std::string cmd_train(const RunConfig& config, const LineSink& out);

// Evaluates a checkpoint on eval_path: accuracy to four decimals plus
// per-class counts. The checkpoint's own meta defines the architecture.
std::string cmd_eval(const RunConfig& config, const LineSink& out);

// Probes constituent states of a trained checkpoint against a bag-of-words
// baseline; 3-way always, 19-way when the corpus has enough categories.
std::string cmd_probe(const RunConfig& config, const LineSink& out);

struct GradCheckRequest {
  std::vector<std::string> kinds;      // empty: every composer kind
  std::vector<int64_t> dims{4, 9, 16};
  uint64_t seed = 0;
  double tolerance = 1e-4;
  // Self-test hook: name of a unit whose analytic gradients are deliberately
  // corrupted before checking, to prove the harness can fail.
  std::string sabotage;
};

// Central-difference verification of every unit: isolated composition per
// kind, the lift layer, the classifier head, and the full pair model. Emits
// one record per unit and throws a verification error if any exceeds the
// tolerance.
std::string cmd_gradcheck(const GradCheckRequest& request, const LineSink& out);

struct ParamCountRequest {
  std::string kind = "lms_base";
  int64_t d = 64;
  int64_t d_emb = 64;
  int64_t vocab = 10000;
  bool cms_per_word = false;
  int64_t mlp_hidden = 256;
  int64_t n_classes = 3;
  bool pair_head = true;
};

// Closed-form parameter counts: named breakdown, section totals, asymptotic
// growth class. Never allocates a model; tests compare against allocation.
std::string cmd_paramcount(const ParamCountRequest& request, const LineSink& out);

struct BenchRequest {
  std::vector<std::string> kinds;  // empty: every composer kind
  std::vector<int64_t> dims{16, 64};
  int64_t reps = 20;
  int64_t compositions = 32;  // chain length per timed repetition
  uint64_t seed = 0;
};

// Median forward+backward wall time per composition, sorted by kind then d.
std::string cmd_bench(const BenchRequest& request, const LineSink& out);

}  // namespace lms
