#pragma once

#include <functional>

#include "lms/composer.hpp"
#include "lms/tree.hpp"

namespace lms {

// States produced while evaluating one sentence, in push order; entry k of a
// post-order linearization is the k-th pushed state. 2n-1 entries for n
// tokens; the last one is the root.
template <class T>
struct ExecutionTrace {
  struct Entry {
    int64_t begin = 0;
    int64_t end = 0;
    NodeState<T> state;
  };
  std::vector<Entry> entries;
  int64_t transition_count = 0;

  const NodeState<T>& root() const { return entries.back().state; }
};

// Produces the leaf NodeState for a token id (embedding lookup included).
// Supplied by the model so the executor stays independent of vocabulary
// handling and dropout policy.
template <class T>
using LeafFn = std::function<NodeState<T>(Tape<T>&, int64_t token_id, int64_t position)>;

template <class T>
ExecutionTrace<T> run_single(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store,
                             const std::vector<int64_t>& token_ids, const std::vector<Transition>& ops,
                             const LeafFn<T>& leaf);

// Examples padded to a common transition count with leading no-ops, so every
// example finishes on the final step.
struct PaddedBatch {
  std::vector<std::vector<int64_t>> token_ids;
  std::vector<std::vector<Transition>> ops;
  int64_t padded_len = 0;
};

PaddedBatch make_padded_batch(std::vector<std::vector<int64_t>> token_ids,
                              std::vector<std::vector<Transition>> ops);

// Lockstep evaluation of a padded batch on one tape. Per-example arithmetic
// and op order match run_single exactly, so results are bit-identical.
template <class T>
std::vector<ExecutionTrace<T>> run_batch(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store,
                                         const PaddedBatch& batch, const LeafFn<T>& leaf);

}  // namespace lms
