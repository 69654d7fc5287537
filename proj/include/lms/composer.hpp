#pragma once

#include <string>
#include <vector>

#include "lms/ops.hpp"
#include "lms/params.hpp"

namespace lms {

// The nine composition functions. Vector-state kinds keep a d-vector per
// node; matrix-state kinds (CMS in lifted mode and the LMS family) keep a
// sqrt(d) x sqrt(d) matrix holding the same d activations.
enum class ComposerKind {
  TreeRnn,
  Cms,
  MvRnn,
  Rntn,
  TreeLstm,
  LmsBase,
  LmsLstm,
  LmsSimpleNoW,
  LmsSimpleOneTanh,
};

const char* to_string(ComposerKind kind);
ComposerKind composer_kind_from(const std::string& token);
std::vector<std::string> composer_kind_tokens();

struct ComposerSpec {
  ComposerKind kind = ComposerKind::TreeRnn;
  int64_t d = 0;
  int64_t d_emb = 0;
  // Word-indexed parameter owners: MV-RNN operator matrices, CMS per-word
  // matrices in fidelity mode.
  int64_t vocab_size = 0;
  // CMS fidelity mode: one learned matrix per word instead of lifted leaves.
  bool cms_per_word = false;

  bool matrix_hidden() const {
    return kind == ComposerKind::Cms || kind == ComposerKind::LmsBase || kind == ComposerKind::LmsLstm ||
           kind == ComposerKind::LmsSimpleNoW || kind == ComposerKind::LmsSimpleOneTanh;
  }
  // The three LMS LSTM-wrapped kinds plus TreeLSTM carry cell vectors.
  bool has_cell() const {
    return kind == ComposerKind::TreeLstm || kind == ComposerKind::LmsLstm ||
           kind == ComposerKind::LmsSimpleNoW || kind == ComposerKind::LmsSimpleOneTanh;
  }
  bool needs_vocab_params() const {
    return kind == ComposerKind::MvRnn || (kind == ComposerKind::Cms && cms_per_word);
  }
  // Side length of the matrix state; requires d to be a perfect square.
  int64_t mat_side() const;
  void validate() const;
};

// Per-node state threaded through tree evaluation. `h` is a d-vector or an
// m x m matrix depending on the kind; `c` is present for LSTM-wrapped kinds;
// `op` is the MV-RNN operator matrix.
template <class T>
struct NodeState {
  Tensor<T> h;
  Tensor<T> c;
  Tensor<T> op;
};

// Creates the composition parameters ("composer.*"). Lift/leaf parameters are
// created separately by make_lift_params.
template <class T>
void make_composer_params(ParameterStore<T>& store, const ComposerSpec& spec, Rng& rng);

template <class T>
NodeState<T> compose(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store, const NodeState<T>& left,
                     const NodeState<T>& right);

// Argument of the outermost nonlinearity producing the candidate state (the
// raw product for CMS, which applies none). This is the function whose
// Jacobian w.r.t. the right child separates additive from multiplicative
// composers.
template <class T>
Tensor<T> candidate_preactivation(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store,
                                  const NodeState<T>& left, const NodeState<T>& right);

// Untracked child state with uniform random values, shaped for the kind.
template <class T>
NodeState<T> random_child_state(const ComposerSpec& spec, Rng& rng, double lo = -0.9, double hi = 0.9);

// Binds plain state values to tape leaves.
template <class T>
NodeState<T> track_state(Tape<T>& tape, const NodeState<T>& values) {
  NodeState<T> s;
  s.h = tape.input(values.h);
  if (!values.c.v.empty()) s.c = tape.input(values.c);
  if (!values.op.v.empty()) s.op = tape.input(values.op);
  return s;
}

// Jacobian of the flattened candidate pre-activation w.r.t. the flattened
// right hidden, rows indexed by output coordinate. Constant in the left child
// for purely additive composers; left-dependent for multiplicative ones.
template <class T>
Tensor<T> right_child_jacobian(const ComposerSpec& spec, ParameterStore<T>& store, const NodeState<T>& left,
                               const NodeState<T>& right);

struct ParamCountEntry {
  std::string name;
  int64_t count = 0;
};

// Closed-form inventory of composition + lift parameters (classifier head,
// embedding table and leaf projections excluded). Names match the parameter
// store exactly.
std::vector<ParamCountEntry> param_count_entries(const ComposerSpec& spec);
int64_t param_count(const ComposerSpec& spec);
// Parameter-count growth class for the kind, e.g. "O(d*d)".
const char* asymptotic_class(ComposerKind kind, bool cms_per_word = false);

}  // namespace lms
