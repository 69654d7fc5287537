#pragma once

#include "lms/composer.hpp"

namespace lms {

// Leaf encoders. Matrix-state kinds lift each word embedding to an m x m
// matrix, H = tanh(W_lift c + B_lift); vector-state kinds project it with a
// learned affine + tanh. CMS in fidelity mode skips both and looks up one
// learned matrix per word.

template <class T>
void make_lift_params(ParameterStore<T>& store, const ComposerSpec& spec, Rng& rng);

template <class T>
Tensor<T> lift(Tape<T>& tape, ParameterStore<T>& store, const ComposerSpec& spec, const Tensor<T>& embedding);

// `word_index` addresses per-word parameters (MV-RNN operators, CMS fidelity
// matrices); kinds without them ignore it.
template <class T>
NodeState<T> leaf_state(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store,
                        const Tensor<T>& embedding, int64_t word_index);

}  // namespace lms
