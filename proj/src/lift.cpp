#include "lms/lift.hpp"

namespace lms {

template <class T>
void make_lift_params(ParameterStore<T>& store, const ComposerSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.matrix_hidden()) {
    if (spec.kind == ComposerKind::Cms && spec.cms_per_word) return;
    int64_t m = spec.mat_side();
    store.create("lift.W", Shape::cube(m, m, spec.d_emb), Init::Xavier, rng, true, true);
    store.create("lift.B", Shape::mat(m, m), Init::Zero, rng);
    return;
  }
  store.create("leaf.W", Shape::mat(spec.d, spec.d_emb), Init::Xavier, rng, true, true);
  store.create("leaf.b", Shape::vec(spec.d), Init::Zero, rng);
}

template <class T>
Tensor<T> lift(Tape<T>& tape, ParameterStore<T>& store, const ComposerSpec& spec, const Tensor<T>& embedding) {
  if (embedding.shape != Shape::vec(spec.d_emb))
    throw_usage("lift: embedding must be " + Shape::vec(spec.d_emb).str() + ", got " + embedding.shape.str());
  auto w = tape.use(store.get("lift.W"));
  auto b = tape.use(store.get("lift.B"));
  return ops::tanh_(tape, ops::add(tape, ops::contract3(tape, w, embedding), b));
}

template <class T>
NodeState<T> leaf_state(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store,
                        const Tensor<T>& embedding, int64_t word_index) {
  NodeState<T> s;
  if (spec.kind == ComposerKind::Cms && spec.cms_per_word) {
    s.h = ops::slab(tape, tape.use(store.get("composer.word_matrices")), word_index);
    return s;
  }
  if (spec.matrix_hidden()) {
    s.h = lift(tape, store, spec, embedding);
  } else {
    auto w = tape.use(store.get("leaf.W"));
    auto b = tape.use(store.get("leaf.b"));
    s.h = ops::tanh_(tape, ops::add(tape, ops::matvec(tape, w, embedding), b));
  }
  if (spec.has_cell()) s.c = tape.input(Tensor<T>(Shape::vec(spec.d)));
  if (spec.kind == ComposerKind::MvRnn)
    s.op = ops::slab(tape, tape.use(store.get("composer.word_ops")), word_index);
  return s;
}

template void make_lift_params<float>(ParameterStore<float>&, const ComposerSpec&, Rng&);
template void make_lift_params<double>(ParameterStore<double>&, const ComposerSpec&, Rng&);
template Tensor<float> lift<float>(Tape<float>&, ParameterStore<float>&, const ComposerSpec&,
                                   const Tensor<float>&);
template Tensor<double> lift<double>(Tape<double>&, ParameterStore<double>&, const ComposerSpec&,
                                     const Tensor<double>&);
template NodeState<float> leaf_state<float>(Tape<float>&, const ComposerSpec&, ParameterStore<float>&,
                                            const Tensor<float>&, int64_t);
template NodeState<double> leaf_state<double>(Tape<double>&, const ComposerSpec&, ParameterStore<double>&,
                                              const Tensor<double>&, int64_t);

}  // namespace lms
