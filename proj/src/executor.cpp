#include "lms/executor.hpp"

namespace lms {

namespace {

template <class T>
struct MachineState {
  std::vector<typename ExecutionTrace<T>::Entry> stack;
  size_t buf_pos = 0;
};

template <class T>
void step(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store,
          const std::vector<int64_t>& token_ids, Transition op, const LeafFn<T>& leaf, MachineState<T>& m,
          ExecutionTrace<T>& trace) {
  if (op == Transition::NoOp) return;
  ++trace.transition_count;
  if (op == Transition::Shift) {
    if (m.buf_pos >= token_ids.size()) throw_data("execution: shift with an empty buffer");
    auto pos = static_cast<int64_t>(m.buf_pos);
    typename ExecutionTrace<T>::Entry e{pos, pos + 1, leaf(tape, token_ids[m.buf_pos], pos)};
    ++m.buf_pos;
    trace.entries.push_back(e);
    m.stack.push_back(std::move(e));
    return;
  }
  if (m.stack.size() < 2) throw_data("execution: reduce with stack depth " + std::to_string(m.stack.size()));
  auto right = std::move(m.stack.back());
  m.stack.pop_back();
  auto left = std::move(m.stack.back());
  m.stack.pop_back();
  typename ExecutionTrace<T>::Entry e{left.begin, right.end,
                                      compose(tape, spec, store, left.state, right.state)};
  trace.entries.push_back(e);
  m.stack.push_back(std::move(e));
}

template <class T>
void finish(const std::vector<int64_t>& token_ids, const MachineState<T>& m) {
  if (m.buf_pos != token_ids.size())
    throw_data("execution: " + std::to_string(token_ids.size() - m.buf_pos) + " tokens left in the buffer");
  if (m.stack.size() != 1)
    throw_data("execution: final stack depth " + std::to_string(m.stack.size()) + ", expected 1");
}

}  // namespace

template <class T>
ExecutionTrace<T> run_single(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store,
                             const std::vector<int64_t>& token_ids, const std::vector<Transition>& ops,
                             const LeafFn<T>& leaf) {
  ExecutionTrace<T> trace;
  MachineState<T> m;
  for (Transition op : ops) step(tape, spec, store, token_ids, op, leaf, m, trace);
  finish(token_ids, m);
  return trace;
}

PaddedBatch make_padded_batch(std::vector<std::vector<int64_t>> token_ids,
                              std::vector<std::vector<Transition>> ops) {
  if (token_ids.size() != ops.size())
    throw_usage("padded batch: " + std::to_string(token_ids.size()) + " token lists vs " +
                std::to_string(ops.size()) + " transition lists");
  PaddedBatch batch;
  batch.token_ids = std::move(token_ids);
  for (const auto& o : ops) batch.padded_len = std::max(batch.padded_len, static_cast<int64_t>(o.size()));
  batch.ops.reserve(ops.size());
  for (auto& o : ops) {
    std::vector<Transition> padded(static_cast<size_t>(batch.padded_len) - o.size(), Transition::NoOp);
    padded.insert(padded.end(), o.begin(), o.end());
    batch.ops.push_back(std::move(padded));
  }
  return batch;
}

template <class T>
std::vector<ExecutionTrace<T>> run_batch(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store,
                                         const PaddedBatch& batch, const LeafFn<T>& leaf) {
  size_t n = batch.token_ids.size();
  std::vector<ExecutionTrace<T>> traces(n);
  std::vector<MachineState<T>> machines(n);
  for (int64_t s = 0; s < batch.padded_len; ++s) {
    for (size_t i = 0; i < n; ++i) {
      try {
        step(tape, spec, store, batch.token_ids[i], batch.ops[i][static_cast<size_t>(s)], leaf, machines[i],
             traces[i]);
      } catch (const Error& e) {
        throw Error(e.kind(), "example " + std::to_string(i) + ": " + e.what());
      }
    }
  }
  for (size_t i = 0; i < n; ++i) {
    try {
      finish(batch.token_ids[i], machines[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), "example " + std::to_string(i) + ": " + e.what());
    }
  }
  return traces;
}

template ExecutionTrace<float> run_single<float>(Tape<float>&, const ComposerSpec&, ParameterStore<float>&,
                                                 const std::vector<int64_t>&, const std::vector<Transition>&,
                                                 const LeafFn<float>&);
template ExecutionTrace<double> run_single<double>(Tape<double>&, const ComposerSpec&, ParameterStore<double>&,
                                                   const std::vector<int64_t>&, const std::vector<Transition>&,
                                                   const LeafFn<double>&);
template std::vector<ExecutionTrace<float>> run_batch<float>(Tape<float>&, const ComposerSpec&,
                                                             ParameterStore<float>&, const PaddedBatch&,
                                                             const LeafFn<float>&);
template std::vector<ExecutionTrace<double>> run_batch<double>(Tape<double>&, const ComposerSpec&,
                                                               ParameterStore<double>&, const PaddedBatch&,
                                                               const LeafFn<double>&);

}  // namespace lms
