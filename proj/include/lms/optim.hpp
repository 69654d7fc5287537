#pragma once

#include <functional>

#include "lms/params.hpp"
#include "lms/tape.hpp"

namespace lms {

// Adam with bias correction. Moment buffers align with the store's creation
// order and are sized on first use; the parameter layout must not change
// between steps.
template <class T>
struct AdamState {
  double alpha = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

template <class T>
void adam_step(AdamState<T>& state, ParameterStore<T>& store);

// grad += 2*lambda*theta on every trainable weight-decay parameter; the
// gradient of the lambda*sum(theta^2) term of the loss.
template <class T>
void add_l2_gradients(ParameterStore<T>& store, double lambda);

// Rescales all trainable gradients so their global L2 norm is at most
// max_norm. Returns the pre-clip norm; max_norm <= 0 disables.
template <class T>
double clip_gradients(ParameterStore<T>& store, double max_norm);

struct TrainOptions {
  double alpha = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda = 1e-5;
  double clip_norm = 0.0;  // off by default
  int64_t batch_size = 32;
  int64_t eval_every = 250;
  int64_t patience = 10;
  int64_t epochs = 100;
  int64_t parallelism = 1;
  uint64_t seed = 0;
  bool timing = true;  // false writes wall_seconds as 0 for byte-stable reruns
};

template <class T>
struct TrainCallbacks {
  // Scalar cross-entropy of one training example, built on the given tape.
  // Called from worker threads when parallelism > 1; must only read shared
  // state and the per-call rng.
  std::function<Tensor<T>(Tape<T>&, size_t index, Rng*)> example_loss;
  // Accuracy on the dev set, in [0, 1]. Called on the training thread.
  std::function<double()> dev_accuracy;
  // New best dev accuracy; checkpoint hook.
  std::function<void(int64_t step, double dev_acc)> on_best;
  // One evaluation record, already formatted as a single line.
  std::function<void(const std::string&)> emit;
  // Per-step observer (testing and progress): cross-entropy term and total.
  std::function<void(int64_t step, double ce, double total)> on_step;
};

struct TrainResult {
  int64_t steps = 0;
  int64_t evals = 0;
  double best_dev = -1.0;
  int64_t best_step = -1;
  bool early_stopped = false;
};

// Epoch loop over n_train examples: seeded per-epoch shuffle, mean-batch
// cross-entropy plus lambda*sum(theta^2), dev evaluation every eval_every
// steps with best-dev retention, early stop after `patience` evaluations
// without improvement. One final evaluation runs if training ends off the
// cadence so every run yields at least one record.
template <class T>
TrainResult train_loop(ParameterStore<T>& store, int64_t n_train, const TrainOptions& opt,
                       const TrainCallbacks<T>& cb);

// Evaluation record formatter shared by the loop and its tests.
std::string metrics_line(int64_t step, double train_loss, double dev_accuracy, double wall_seconds);

}  // namespace lms
