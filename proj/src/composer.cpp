#include "lms/composer.hpp"

#include <cmath>

namespace lms {

namespace {

struct KindToken {
  ComposerKind kind;
  const char* token;
};

constexpr KindToken kKindTokens[] = {
    {ComposerKind::TreeRnn, "tree_rnn"},
    {ComposerKind::Cms, "cms"},
    {ComposerKind::MvRnn, "mv_rnn"},
    {ComposerKind::Rntn, "rntn"},
    {ComposerKind::TreeLstm, "tree_lstm"},
    {ComposerKind::LmsBase, "lms_base"},
    {ComposerKind::LmsLstm, "lms_lstm"},
    {ComposerKind::LmsSimpleNoW, "lms_simple_no_w"},
    {ComposerKind::LmsSimpleOneTanh, "lms_simple_one_tanh"},
};

}  // namespace

const char* to_string(ComposerKind kind) {
  for (const auto& kt : kKindTokens)
    if (kt.kind == kind) return kt.token;
  throw_internal("unknown composer kind");
}

ComposerKind composer_kind_from(const std::string& token) {
  for (const auto& kt : kKindTokens)
    if (token == kt.token) return kt.kind;
  std::string valid;
  for (const auto& kt : kKindTokens) {
    if (!valid.empty()) valid += ", ";
    valid += kt.token;
  }
  throw_usage("unknown composer '" + token + "'; valid: " + valid);
}

std::vector<std::string> composer_kind_tokens() {
  std::vector<std::string> out;
  for (const auto& kt : kKindTokens) out.emplace_back(kt.token);
  return out;
}

int64_t ComposerSpec::mat_side() const {
  auto m = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(d))));
  if (m * m != d)
    throw_usage("d must be a perfect square for matrix-state composers, got " + std::to_string(d));
  return m;
}

void ComposerSpec::validate() const {
  if (d <= 0) throw_usage("d must be positive, got " + std::to_string(d));
  if (d_emb <= 0) throw_usage("d_emb must be positive, got " + std::to_string(d_emb));
  if (matrix_hidden()) mat_side();
  if (needs_vocab_params() && vocab_size <= 0)
    throw_usage(std::string(to_string(kind)) + " needs a positive vocab_size, got " + std::to_string(vocab_size));
}

namespace {

// One matrix per word, identity plus small noise. Identity-centered starts
// keep long products of leaf matrices bounded.
template <class T>
void init_identity_slabs(Parameter<T>& p, Rng& rng) {
  int64_t n = p.value.shape[0], r = p.value.shape[1];
  for (auto& v : p.value.v) v = static_cast<T>(rng.uniform(-0.01, 0.01));
  for (int64_t w = 0; w < n; ++w)
    for (int64_t i = 0; i < r; ++i) p.value.at(w, i, i) += T(1);
}

// Gate bias layout is [i; f_l; f_r; o]; forget segments start at +1.
template <class T>
void make_gate_params(ParameterStore<T>& store, int64_t d, Rng& rng) {
  store.create("composer.gate_W", Shape::mat(4 * d, 2 * d), Init::Xavier, rng, true, true);
  auto& gb = store.create("composer.gate_b", Shape::vec(4 * d), Init::Zero, rng);
  for (int64_t i = d; i < 3 * d; ++i) gb.value.at(i) = T(1);
}

}  // namespace

template <class T>
void make_composer_params(ParameterStore<T>& store, const ComposerSpec& spec, Rng& rng) {
  spec.validate();
  int64_t d = spec.d;
  switch (spec.kind) {
    case ComposerKind::TreeRnn:
      store.create("composer.W", Shape::mat(d, 2 * d), Init::Xavier, rng, true, true);
      store.create("composer.b", Shape::vec(d), Init::Zero, rng);
      break;
    case ComposerKind::TreeLstm:
      make_gate_params(store, d, rng);
      store.create("composer.cand_W", Shape::mat(d, 2 * d), Init::Xavier, rng, true, true);
      store.create("composer.cand_b", Shape::vec(d), Init::Zero, rng);
      break;
    case ComposerKind::Rntn:
      store.create("composer.V", Shape::cube(d, d, d), Init::Xavier, rng, true, true);
      store.create("composer.W", Shape::mat(d, 2 * d), Init::Xavier, rng, true, true);
      store.create("composer.b", Shape::vec(d), Init::Zero, rng);
      break;
    case ComposerKind::MvRnn: {
      auto& ops_ = store.create("composer.word_ops", Shape::cube(spec.vocab_size, d, d), Init::Zero, rng);
      init_identity_slabs(ops_, rng);
      store.create("composer.W", Shape::mat(d, 2 * d), Init::Xavier, rng, true, true);
      store.create("composer.op_W", Shape::mat(d, 2 * d), Init::Xavier, rng, true, true);
      break;
    }
    case ComposerKind::Cms:
      if (spec.cms_per_word) {
        int64_t m = spec.mat_side();
        auto& mats = store.create("composer.word_matrices", Shape::cube(spec.vocab_size, m, m), Init::Zero, rng);
        init_identity_slabs(mats, rng);
      }
      break;
    case ComposerKind::LmsBase: {
      int64_t m = spec.mat_side();
      store.create("composer.W_comb", Shape::mat(m, m), Init::Xavier, rng, true, true);
      store.create("composer.B1", Shape::mat(m, m), Init::Zero, rng);
      store.create("composer.B2", Shape::mat(m, m), Init::Zero, rng);
      break;
    }
    case ComposerKind::LmsLstm: {
      int64_t m = spec.mat_side();
      store.create("composer.W_comb", Shape::mat(m, m), Init::Xavier, rng, true, true);
      store.create("composer.B1", Shape::mat(m, m), Init::Zero, rng);
      store.create("composer.B2", Shape::mat(m, m), Init::Zero, rng);
      make_gate_params(store, d, rng);
      break;
    }
    case ComposerKind::LmsSimpleNoW: {
      int64_t m = spec.mat_side();
      store.create("composer.B", Shape::mat(m, m), Init::Zero, rng);
      make_gate_params(store, d, rng);
      break;
    }
    case ComposerKind::LmsSimpleOneTanh: {
      int64_t m = spec.mat_side();
      store.create("composer.W_comb", Shape::mat(m, m), Init::Xavier, rng, true, true);
      store.create("composer.B", Shape::mat(m, m), Init::Zero, rng);
      make_gate_params(store, d, rng);
      break;
    }
  }
}

namespace {

template <class T>
void require_state(const ComposerSpec& spec, const NodeState<T>& s, const char* side) {
  if (spec.matrix_hidden()) {
    int64_t m = spec.mat_side();
    if (s.h.shape != Shape::mat(m, m))
      throw_usage(std::string("compose: ") + side + " hidden must be " + Shape::mat(m, m).str() + ", got " +
                  s.h.shape.str());
  } else if (s.h.shape != Shape::vec(spec.d)) {
    throw_usage(std::string("compose: ") + side + " hidden must be " + Shape::vec(spec.d).str() + ", got " +
                s.h.shape.str());
  }
  if (spec.has_cell() && s.c.shape != Shape::vec(spec.d))
    throw_usage(std::string("compose: ") + side + " is missing its cell state");
  if (spec.kind == ComposerKind::MvRnn && s.op.shape != Shape::mat(spec.d, spec.d))
    throw_usage(std::string("compose: ") + side + " is missing its operator matrix");
}

// c = f_l.*c_l + f_r.*c_r + i.*g, h = o.*tanh(c), gates from [h_l;h_r].
template <class T>
NodeState<T> lstm_wrap(Tape<T>& tape, ParameterStore<T>& store, int64_t d, const Tensor<T>& hl,
                       const Tensor<T>& hr, const Tensor<T>& cl, const Tensor<T>& cr, const Tensor<T>& g) {
  auto gw = tape.use(store.get("composer.gate_W"));
  auto gb = tape.use(store.get("composer.gate_b"));
  auto z = ops::add(tape, ops::matvec(tape, gw, ops::concat(tape, hl, hr)), gb);
  auto i = ops::sigmoid_(tape, ops::slice(tape, z, 0, d));
  auto fl = ops::sigmoid_(tape, ops::slice(tape, z, d, 2 * d));
  auto fr = ops::sigmoid_(tape, ops::slice(tape, z, 2 * d, 3 * d));
  auto o = ops::sigmoid_(tape, ops::slice(tape, z, 3 * d, 4 * d));
  auto c = ops::add(tape, ops::add(tape, ops::hadamard(tape, fl, cl), ops::hadamard(tape, fr, cr)),
                    ops::hadamard(tape, i, g));
  NodeState<T> out;
  out.c = c;
  out.h = ops::hadamard(tape, o, ops::tanh_(tape, c));
  return out;
}

// Pre-activation of the candidate state: what the outermost nonlinearity
// sees. CMS has no nonlinearity, so it is the product itself.
template <class T>
Tensor<T> cand_pre(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store, const NodeState<T>& left,
                   const NodeState<T>& right) {
  switch (spec.kind) {
    case ComposerKind::TreeRnn: {
      auto w = tape.use(store.get("composer.W"));
      auto b = tape.use(store.get("composer.b"));
      return ops::add(tape, ops::matvec(tape, w, ops::concat(tape, left.h, right.h)), b);
    }
    case ComposerKind::TreeLstm: {
      auto w = tape.use(store.get("composer.cand_W"));
      auto b = tape.use(store.get("composer.cand_b"));
      return ops::add(tape, ops::matvec(tape, w, ops::concat(tape, left.h, right.h)), b);
    }
    case ComposerKind::Rntn: {
      auto v = tape.use(store.get("composer.V"));
      auto w = tape.use(store.get("composer.W"));
      auto b = tape.use(store.get("composer.b"));
      auto affine = ops::add(tape, ops::matvec(tape, w, ops::concat(tape, left.h, right.h)), b);
      return ops::add(tape, affine, ops::bilinear(tape, v, left.h, right.h));
    }
    case ComposerKind::MvRnn: {
      auto w = tape.use(store.get("composer.W"));
      auto ba = ops::matvec(tape, right.op, left.h);
      auto ab = ops::matvec(tape, left.op, right.h);
      return ops::matvec(tape, w, ops::concat(tape, ba, ab));
    }
    case ComposerKind::Cms:
      return ops::matmul(tape, left.h, right.h);
    case ComposerKind::LmsBase:
    case ComposerKind::LmsLstm: {
      auto wc = tape.use(store.get("composer.W_comb"));
      auto b1 = tape.use(store.get("composer.B1"));
      auto b2 = tape.use(store.get("composer.B2"));
      auto inner = ops::tanh_(tape, ops::add(tape, ops::matmul(tape, wc, left.h), b1));
      return ops::add(tape, ops::matmul(tape, inner, right.h), b2);
    }
    case ComposerKind::LmsSimpleNoW: {
      auto b = tape.use(store.get("composer.B"));
      return ops::add(tape, ops::matmul(tape, left.h, right.h), b);
    }
    case ComposerKind::LmsSimpleOneTanh: {
      auto wc = tape.use(store.get("composer.W_comb"));
      auto b = tape.use(store.get("composer.B"));
      return ops::add(tape, ops::matmul(tape, wc, ops::matmul(tape, left.h, right.h)), b);
    }
  }
  throw_internal("unknown composer kind");
}

}  // namespace

template <class T>
NodeState<T> compose(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store, const NodeState<T>& left,
                     const NodeState<T>& right) {
  require_state(spec, left, "left");
  require_state(spec, right, "right");
  NodeState<T> out;
  switch (spec.kind) {
    case ComposerKind::TreeRnn:
    case ComposerKind::Rntn:
      out.h = ops::tanh_(tape, cand_pre(tape, spec, store, left, right));
      break;
    case ComposerKind::Cms:
      out.h = cand_pre(tape, spec, store, left, right);
      break;
    case ComposerKind::MvRnn: {
      out.h = ops::tanh_(tape, cand_pre(tape, spec, store, left, right));
      auto opw = tape.use(store.get("composer.op_W"));
      out.op = ops::matmul(tape, opw, ops::concat_rows(tape, left.op, right.op));
      break;
    }
    case ComposerKind::TreeLstm: {
      auto g = ops::tanh_(tape, cand_pre(tape, spec, store, left, right));
      out = lstm_wrap(tape, store, spec.d, left.h, right.h, left.c, right.c, g);
      break;
    }
    case ComposerKind::LmsBase:
      out.h = ops::tanh_(tape, cand_pre(tape, spec, store, left, right));
      break;
    case ComposerKind::LmsLstm:
    case ComposerKind::LmsSimpleNoW:
    case ComposerKind::LmsSimpleOneTanh: {
      int64_t m = spec.mat_side();
      auto g = ops::vectorize(tape, ops::tanh_(tape, cand_pre(tape, spec, store, left, right)));
      auto hl = ops::vectorize(tape, left.h);
      auto hr = ops::vectorize(tape, right.h);
      NodeState<T> wrapped = lstm_wrap(tape, store, spec.d, hl, hr, left.c, right.c, g);
      out.c = wrapped.c;
      out.h = ops::to_matrix(tape, wrapped.h, m, m);
      break;
    }
  }
  return out;
}

template <class T>
Tensor<T> candidate_preactivation(Tape<T>& tape, const ComposerSpec& spec, ParameterStore<T>& store,
                                  const NodeState<T>& left, const NodeState<T>& right) {
  require_state(spec, left, "left");
  require_state(spec, right, "right");
  return cand_pre(tape, spec, store, left, right);
}

template <class T>
NodeState<T> random_child_state(const ComposerSpec& spec, Rng& rng, double lo, double hi) {
  NodeState<T> s;
  Shape hs = spec.matrix_hidden() ? Shape::mat(spec.mat_side(), spec.mat_side()) : Shape::vec(spec.d);
  s.h = Tensor<T>(hs);
  for (auto& v : s.h.v) v = static_cast<T>(rng.uniform(lo, hi));
  if (spec.has_cell()) {
    s.c = Tensor<T>(Shape::vec(spec.d));
    for (auto& v : s.c.v) v = static_cast<T>(rng.uniform(lo, hi));
  }
  if (spec.kind == ComposerKind::MvRnn) {
    s.op = Tensor<T>(Shape::mat(spec.d, spec.d));
    for (auto& v : s.op.v) v = static_cast<T>(rng.uniform(lo, hi));
  }
  return s;
}

template <class T>
Tensor<T> right_child_jacobian(const ComposerSpec& spec, ParameterStore<T>& store, const NodeState<T>& left,
                               const NodeState<T>& right) {
  Tape<T> tape;
  NodeState<T> l = track_state(tape, left);
  NodeState<T> r = track_state(tape, right);
  Tensor<T> pre = cand_pre(tape, spec, store, l, r);
  Tensor<T> flat = pre.shape.rank == 1 ? pre : ops::vectorize(tape, pre);
  int64_t rows = flat.shape[0], cols = r.h.size();
  std::vector<Tensor<T>> coords;
  coords.reserve(static_cast<size_t>(rows));
  for (int64_t k = 0; k < rows; ++k) coords.push_back(ops::sum(tape, ops::slice(tape, flat, k, k + 1)));
  Tensor<T> jac(Shape::mat(rows, cols));
  for (int64_t k = 0; k < rows; ++k) {
    tape.backward(coords[static_cast<size_t>(k)]);
    Tensor<T> g = tape.grad_tensor(r.h);
    for (int64_t j = 0; j < cols; ++j) jac.at(k, j) = g.v[static_cast<size_t>(j)];
  }
  return jac;
}

std::vector<ParamCountEntry> param_count_entries(const ComposerSpec& spec) {
  spec.validate();
  int64_t d = spec.d, de = spec.d_emb, v = spec.vocab_size;
  std::vector<ParamCountEntry> e;
  auto lift = [&] {
    e.push_back({"lift.W", d * de});
    e.push_back({"lift.B", d});
  };
  auto gates = [&] {
    e.push_back({"composer.gate_W", 8 * d * d});
    e.push_back({"composer.gate_b", 4 * d});
  };
  switch (spec.kind) {
    case ComposerKind::TreeRnn:
      e.push_back({"composer.W", 2 * d * d});
      e.push_back({"composer.b", d});
      break;
    case ComposerKind::TreeLstm:
      gates();
      e.push_back({"composer.cand_W", 2 * d * d});
      e.push_back({"composer.cand_b", d});
      break;
    case ComposerKind::Rntn:
      e.push_back({"composer.V", d * d * d});
      e.push_back({"composer.W", 2 * d * d});
      e.push_back({"composer.b", d});
      break;
    case ComposerKind::MvRnn:
      e.push_back({"composer.word_ops", v * d * d});
      e.push_back({"composer.W", 2 * d * d});
      e.push_back({"composer.op_W", 2 * d * d});
      break;
    case ComposerKind::Cms:
      if (spec.cms_per_word)
        e.push_back({"composer.word_matrices", v * d});
      else
        lift();
      break;
    case ComposerKind::LmsBase:
      lift();
      e.push_back({"composer.W_comb", d});
      e.push_back({"composer.B1", d});
      e.push_back({"composer.B2", d});
      break;
    case ComposerKind::LmsLstm:
      lift();
      e.push_back({"composer.W_comb", d});
      e.push_back({"composer.B1", d});
      e.push_back({"composer.B2", d});
      gates();
      break;
    case ComposerKind::LmsSimpleNoW:
      lift();
      e.push_back({"composer.B", d});
      gates();
      break;
    case ComposerKind::LmsSimpleOneTanh:
      lift();
      e.push_back({"composer.W_comb", d});
      e.push_back({"composer.B", d});
      gates();
      break;
  }
  return e;
}

int64_t param_count(const ComposerSpec& spec) {
  int64_t total = 0;
  for (const auto& entry : param_count_entries(spec)) total += entry.count;
  return total;
}

const char* asymptotic_class(ComposerKind kind, bool cms_per_word) {
  switch (kind) {
    case ComposerKind::TreeRnn:
    case ComposerKind::TreeLstm:
      return "O(d*d)";
    case ComposerKind::Cms:
      return cms_per_word ? "O(V*d)" : "O(d*d_emb)";
    case ComposerKind::MvRnn:
      return "O(V*d*d)";
    case ComposerKind::Rntn:
      return "O(d*d*d)";
    case ComposerKind::LmsBase:
      return "O(d*d_emb)";
    case ComposerKind::LmsLstm:
    case ComposerKind::LmsSimpleNoW:
    case ComposerKind::LmsSimpleOneTanh:
      return "O(d*d + d*d_emb)";
  }
  throw_internal("unknown composer kind");
}

template void make_composer_params<float>(ParameterStore<float>&, const ComposerSpec&, Rng&);
template void make_composer_params<double>(ParameterStore<double>&, const ComposerSpec&, Rng&);
template NodeState<float> compose<float>(Tape<float>&, const ComposerSpec&, ParameterStore<float>&,
                                         const NodeState<float>&, const NodeState<float>&);
template NodeState<double> compose<double>(Tape<double>&, const ComposerSpec&, ParameterStore<double>&,
                                           const NodeState<double>&, const NodeState<double>&);
template Tensor<float> candidate_preactivation<float>(Tape<float>&, const ComposerSpec&, ParameterStore<float>&,
                                                      const NodeState<float>&, const NodeState<float>&);
template Tensor<double> candidate_preactivation<double>(Tape<double>&, const ComposerSpec&,
                                                        ParameterStore<double>&, const NodeState<double>&,
                                                        const NodeState<double>&);
template NodeState<float> random_child_state<float>(const ComposerSpec&, Rng&, double, double);
template NodeState<double> random_child_state<double>(const ComposerSpec&, Rng&, double, double);
template Tensor<float> right_child_jacobian<float>(const ComposerSpec&, ParameterStore<float>&,
                                                   const NodeState<float>&, const NodeState<float>&);
template Tensor<double> right_child_jacobian<double>(const ComposerSpec&, ParameterStore<double>&,
                                                     const NodeState<double>&, const NodeState<double>&);

}  // namespace lms
