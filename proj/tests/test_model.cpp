#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "lms/gradcheck.hpp"
#include "lms/model.hpp"
#include "lms/tree.hpp"

using namespace lms;

namespace {

using Vec = std::vector<double>;

Sentence two_tokens(int64_t a, int64_t b) {
  return {{a, b}, {Transition::Shift, Transition::Shift, Transition::Reduce}};
}

Sentence three_tokens_right(int64_t a, int64_t b, int64_t c) {
  // (a (b c))
  return {{a, b, c},
          {Transition::Shift, Transition::Shift, Transition::Shift, Transition::Reduce, Transition::Reduce}};
}

const Vec& pv(const ParameterStore<double>& s, const std::string& name) { return s.get(name).value.v; }

Vec matvec_plain(const Vec& w, int64_t rows, int64_t cols, const Vec& x) {
  Vec out(static_cast<size_t>(rows), 0.0);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j)
      out[static_cast<size_t>(i)] += w[static_cast<size_t>(i * cols + j)] * x[static_cast<size_t>(j)];
  return out;
}

Vec matmul2(const Vec& a, const Vec& b) {
  Vec c(4, 0.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) c[size_t(i * 2 + j)] += a[size_t(i * 2 + k)] * b[size_t(k * 2 + j)];
  return c;
}

Vec add_v(Vec a, const Vec& b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}
Vec tanh_v(Vec a) {
  for (auto& x : a) x = std::tanh(x);
  return a;
}
Vec sigmoid_v(Vec a) {
  for (auto& x : a) x = 1.0 / (1.0 + std::exp(-x));
  return a;
}
Vec relu_v(Vec a) {
  for (auto& x : a) x = x > 0.0 ? x : 0.0;
  return a;
}
Vec had_v(Vec a, const Vec& b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  return a;
}
Vec cat_v(Vec a, const Vec& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}
Vec slice_v(const Vec& a, size_t lo, size_t hi) { return Vec(a.begin() + long(lo), a.begin() + long(hi)); }

Vec layer_norm_plain(const Vec& x, const Vec& g, const Vec& b) {
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= double(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  var /= double(x.size());
  double inv = 1.0 / std::sqrt(var + 1e-6);
  Vec out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = g[i] * ((x[i] - mu) * inv) + b[i];
  return out;
}

Vec mlp_plain(const ParameterStore<double>& s, const Vec& x, int64_t in, int64_t h, int64_t c) {
  Vec z1 = layer_norm_plain(add_v(matvec_plain(pv(s, "mlp.W1"), h, in, x), pv(s, "mlp.b1")), pv(s, "mlp.ln1_g"),
                            pv(s, "mlp.ln1_b"));
  Vec a1 = relu_v(z1);
  Vec z2 = layer_norm_plain(add_v(matvec_plain(pv(s, "mlp.W2"), h, h, a1), pv(s, "mlp.b2")), pv(s, "mlp.ln2_g"),
                            pv(s, "mlp.ln2_b"));
  Vec a2 = relu_v(z2);
  return add_v(matvec_plain(pv(s, "mlp.out_W"), c, h, a2), pv(s, "mlp.out_b"));
}

double ce_plain(const Vec& logits, int target) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return std::log(z) - (logits[size_t(target)] - mx);
}

Vec softmax_plain(const Vec& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  Vec p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
  for (auto& v : p) v /= z;
  return p;
}

// Leaf lift for a 2x2 matrix state, H = tanh(W c + B), W indexed [(a*2+b)*d_emb + k].
Vec lift_plain(const ParameterStore<double>& s, const Vec& emb) {
  const Vec& w = pv(s, "lift.W");
  const Vec& b = pv(s, "lift.B");
  Vec h(4);
  for (int e = 0; e < 4; ++e) {
    double acc = b[size_t(e)];
    for (size_t k = 0; k < emb.size(); ++k) acc += w[size_t(e) * emb.size() + k] * emb[k];
    h[size_t(e)] = std::tanh(acc);
  }
  return h;
}

// Root of a two-leaf matrix-recurrent LSTM cell, leaf cells zero. Returns the
// flattened hidden state.
Vec lms_lstm_root_plain(const ParameterStore<double>& s, const Vec& hl, const Vec& hr) {
  Vec inner = tanh_v(add_v(matmul2(pv(s, "composer.W_comb"), hl), pv(s, "composer.B1")));
  Vec g = tanh_v(add_v(matmul2(inner, hr), pv(s, "composer.B2")));
  Vec pre = add_v(matvec_plain(pv(s, "composer.gate_W"), 16, 8, cat_v(hl, hr)), pv(s, "composer.gate_b"));
  Vec i = sigmoid_v(slice_v(pre, 0, 4));
  Vec o = sigmoid_v(slice_v(pre, 12, 16));
  Vec c = had_v(i, g);
  Vec h = had_v(o, tanh_v(c));
  return h;
}

}  // namespace

TEST_CASE("pair features concatenate both states, their difference and product") {
  Tape<double> tape;
  auto hp = tape.input(Tensor<double>(Shape::vec(2), {1.0, 2.0}));
  auto hh = tape.input(Tensor<double>(Shape::vec(2), {3.0, 4.0}));
  auto x = pair_features(tape, hp, hh);
  REQUIRE(x.shape == Shape::vec(8));
  Vec want = {1.0, 2.0, 3.0, 4.0, -2.0, -2.0, 3.0, 8.0};
  for (size_t i = 0; i < want.size(); ++i) CHECK(x.v[i] == doctest::Approx(want[i]).epsilon(1e-12));

  auto y = pair_features(tape, hh, hp);
  // Swapping the sentences permutes the copies, negates the difference and
  // keeps the product.
  CHECK(y.v[0] == x.v[2]);
  CHECK(y.v[2] == x.v[0]);
  CHECK(y.v[4] == -x.v[4]);
  CHECK(y.v[6] == x.v[6]);
}

TEST_CASE("model parameter inventory and flags") {
  ComposerSpec spec;
  spec.kind = ComposerKind::LmsLstm;
  spec.d = 4;
  spec.d_emb = 3;
  Rng rng(7);
  auto model = make_model<double>(spec, 11, 3, 8, true, 0.1, 0.1, false, rng);

  CHECK(model.feature_width == 16);
  auto& emb = model.store.get("embed.table");
  CHECK(emb.value.shape == Shape::mat(11, 3));
  CHECK_FALSE(emb.trainable);  // frozen embeddings
  CHECK_FALSE(emb.weight_decay);
  for (double v : emb.value.v) {
    CHECK(std::abs(v) <= 0.1);
  }
  CHECK(model.store.get("mlp.W1").weight_decay);
  CHECK_FALSE(model.store.get("mlp.b1").weight_decay);
  for (double v : pv(model.store, "mlp.ln1_g")) CHECK(v == 1.0);
  for (double v : pv(model.store, "mlp.ln2_b")) CHECK(v == 0.0);
  CHECK(model.store.get("mlp.out_W").value.shape == Shape::mat(3, 8));

  ComposerSpec fid;
  fid.kind = ComposerKind::Cms;
  fid.d = 4;
  fid.d_emb = 3;
  fid.cms_per_word = true;
  Rng rng2(7);
  auto fmodel = make_model<double>(fid, 11, 3, 8, true, 0.0, 0.0, true, rng2);
  CHECK_FALSE(fmodel.store.has("embed.table"));
  CHECK(fmodel.store.has("composer.word_matrices"));
}

TEST_CASE("zeroed classifier head yields the uniform-distribution loss") {
  ComposerSpec spec;
  spec.kind = ComposerKind::TreeRnn;
  spec.d = 4;
  spec.d_emb = 3;
  Rng rng(3);
  auto model = make_model<double>(spec, 6, 3, 5, true, 0.0, 0.0, true, rng);
  for (auto& p : model.store.items())
    if (p->name.rfind("mlp.", 0) == 0) std::fill(p->value.v.begin(), p->value.v.end(), 0.0);

  Tape<double> tape;
  auto out = pair_loss(tape, model, two_tokens(1, 2), two_tokens(3, 4), 2, nullptr);
  CHECK(out.loss.v[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  for (double p : out.probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("pair classification matches a straight-line recomputation") {
  ComposerSpec spec;
  spec.kind = ComposerKind::LmsLstm;
  spec.d = 4;
  spec.d_emb = 3;
  Rng rng(0);
  auto model = make_model<double>(spec, 6, 3, 5, true, 0.0, 0.0, true, rng);
  auto premise = two_tokens(1, 2);
  auto hypothesis = two_tokens(3, 4);

  Tape<double> tape;
  auto logits = classify_pair(tape, model, premise, hypothesis, nullptr);
  REQUIRE(logits.shape == Shape::vec(3));

  auto& s = model.store;
  const Vec& table = pv(s, "embed.table");
  auto emb_row = [&](int64_t r) { return slice_v(table, size_t(r) * 3, size_t(r) * 3 + 3); };
  auto encode_two = [&](const Sentence& sent) {
    Vec hl = lift_plain(s, emb_row(sent.ids[0]));
    Vec hr = lift_plain(s, emb_row(sent.ids[1]));
    return lms_lstm_root_plain(s, hl, hr);
  };
  Vec hp = encode_two(premise);
  Vec hh = encode_two(hypothesis);
  Vec diff(4), prod(4);
  for (int i = 0; i < 4; ++i) {
    diff[size_t(i)] = hp[size_t(i)] - hh[size_t(i)];
    prod[size_t(i)] = hp[size_t(i)] * hh[size_t(i)];
  }
  Vec x = cat_v(cat_v(hp, hh), cat_v(diff, prod));
  Vec want = mlp_plain(s, x, 16, 5, 3);

  for (int i = 0; i < 3; ++i) CHECK(logits.v[size_t(i)] == doctest::Approx(want[size_t(i)]).epsilon(1e-9));

  Tape<double> tape2;
  auto out = pair_loss(tape2, model, premise, hypothesis, 1, nullptr);
  CHECK(out.loss.v[0] == doctest::Approx(ce_plain(want, 1)).epsilon(1e-9));
  Vec probs = softmax_plain(want);
  for (int i = 0; i < 3; ++i) CHECK(out.probs[size_t(i)] == doctest::Approx(probs[size_t(i)]).epsilon(1e-9));
  CHECK(out.pred == ops::argmax_index(probs));
}

TEST_CASE("pair loss gradients check out end to end") {
  ComposerSpec spec;
  spec.kind = ComposerKind::LmsLstm;
  spec.d = 4;
  spec.d_emb = 3;
  Rng rng(12);
  auto model = make_model<double>(spec, 5, 3, 6, true, 0.0, 0.0, true, rng);
  Rng cond(13);
  condition_for_gradcheck(model.store, cond);
  auto premise = three_tokens_right(0, 1, 2);
  auto hypothesis = two_tokens(3, 4);

  auto loss = [&](bool do_backward) {
    Tape<double> tape;
    auto out = pair_loss(tape, model, premise, hypothesis, 1, nullptr);
    if (do_backward) tape.backward(out.loss);
    return out.loss.v[0];
  };
  auto rep = check_gradients<double>(model.store, loss);
  INFO(rep.worst_coord, " rel err ", rep.max_rel_err);
  CHECK(rep.ok);
  CHECK(rep.coords_checked > 300);
}

TEST_CASE("sentiment labels follow executor push order") {
  auto tree = parse_sst("(3 (2 a) (1 (0 b) (2 c)))");
  auto labels = sst_node_labels(tree);
  CHECK(labels == std::vector<int>{2, 0, 2, 1, 3});

  auto bare = parse_binary("( a b )");
  CHECK_THROWS_WITH_AS(sst_node_labels(bare), "sentiment tree: node over [0, 1) has no label", Error);
}

TEST_CASE("sentence-level sentiment loss sums every node and matches a recomputation") {
  ComposerSpec spec;
  spec.kind = ComposerKind::TreeRnn;
  spec.d = 4;
  spec.d_emb = 3;
  Rng rng(21);
  auto model = make_model<double>(spec, 8, 5, 6, false, 0.0, 0.0, true, rng);
  CHECK(model.feature_width == 4);

  auto tree = parse_sst("(3 (2 a) (1 (0 b) (2 c)))");
  auto seq = to_transitions(tree);
  Sentence sent{{5, 6, 7}, seq.ops};
  auto labels = sst_node_labels(tree);

  Tape<double> tape;
  auto out = classify_sst(tape, model, sent, labels, nullptr);
  CHECK(out.node_count == 5);

  auto& s = model.store;
  const Vec& table = pv(s, "embed.table");
  auto leaf = [&](int64_t id) {
    Vec e = slice_v(table, size_t(id) * 3, size_t(id) * 3 + 3);
    return tanh_v(add_v(matvec_plain(pv(s, "leaf.W"), 4, 3, e), pv(s, "leaf.b")));
  };
  auto compose2 = [&](const Vec& l, const Vec& r) {
    return tanh_v(add_v(matvec_plain(pv(s, "composer.W"), 4, 8, cat_v(l, r)), pv(s, "composer.b")));
  };
  Vec ha = leaf(5), hb = leaf(6), hc = leaf(7);
  Vec hbc = compose2(hb, hc);
  Vec hroot = compose2(ha, hbc);
  std::vector<Vec> states = {ha, hb, hc, hbc, hroot};
  double want = 0.0;
  for (size_t i = 0; i < states.size(); ++i)
    want += ce_plain(mlp_plain(s, states[i], 4, 6, 5), labels[i]);
  CHECK(out.loss_sum.v[0] == doctest::Approx(want).epsilon(1e-9));
  CHECK(out.root_pred == ops::argmax_index(softmax_plain(mlp_plain(s, hroot, 4, 6, 5))));

  auto short_labels = std::vector<int>{2, 0, 2};
  CHECK_THROWS_WITH_AS(classify_sst(tape, model, sent, short_labels, nullptr),
                       "sentiment tree: 3 labels for 5 nodes", Error);
}

TEST_CASE("sentiment gradients flow through every node head") {
  ComposerSpec spec;
  spec.kind = ComposerKind::TreeLstm;
  spec.d = 4;
  spec.d_emb = 3;
  Rng rng(9);
  auto model = make_model<double>(spec, 6, 5, 5, false, 0.0, 0.0, true, rng);
  auto tree = parse_sst("(4 (1 a) (2 b))");
  Sentence sent{{2, 3}, to_transitions(tree).ops};
  auto labels = sst_node_labels(tree);

  auto loss = [&](bool do_backward) {
    Tape<double> tape;
    auto out = classify_sst(tape, model, sent, labels, nullptr);
    if (do_backward) tape.backward(out.loss_sum);
    return out.loss_sum.v[0];
  };
  auto rep = check_gradients<double>(model.store, loss);
  INFO(rep.worst_coord, " rel err ", rep.max_rel_err);
  CHECK(rep.ok);
}

TEST_CASE("head and sentence-shape mismatches are rejected") {
  ComposerSpec spec;
  spec.kind = ComposerKind::TreeRnn;
  spec.d = 4;
  spec.d_emb = 3;
  Rng rng(4);
  auto pair_model = make_model<double>(spec, 6, 3, 5, true, 0.0, 0.0, true, rng);
  auto single_model = make_model<double>(spec, 6, 5, 5, false, 0.0, 0.0, true, rng);

  Tape<double> tape;
  CHECK_THROWS_WITH_AS(classify_sst(tape, pair_model, two_tokens(1, 2), {1, 1, 1}, nullptr),
                       "classifier head was built for sentence pairs, not single sentences", Error);
  CHECK_THROWS_WITH_AS(classify_pair(tape, single_model, two_tokens(1, 2), two_tokens(3, 4), nullptr),
                       "classifier head was built for single sentences, not pairs", Error);
  CHECK_THROWS_AS(make_model<double>(spec, 6, 1, 5, true, 0.0, 0.0, true, rng), Error);
  CHECK_THROWS_AS(make_model<double>(spec, 6, 3, 5, true, 1.0, 0.0, true, rng), Error);
}

TEST_CASE("dropout only fires in training mode") {
  ComposerSpec spec;
  spec.kind = ComposerKind::TreeRnn;
  spec.d = 6;
  spec.d_emb = 4;
  Rng rng(15);
  auto model = make_model<double>(spec, 6, 3, 16, true, 0.5, 0.25, true, rng);
  auto premise = two_tokens(1, 2);
  auto hypothesis = two_tokens(3, 4);

  auto eval_loss = [&]() {
    Tape<double> tape;
    return pair_loss(tape, model, premise, hypothesis, 0, nullptr).loss.v[0];
  };
  double a = eval_loss();
  double b = eval_loss();
  CHECK(a == b);  // eval mode is deterministic

  Rng drop(99);
  auto train_loss = [&]() {
    Tape<double> tape;
    return pair_loss(tape, model, premise, hypothesis, 0, &drop).loss.v[0];
  };
  double t1 = train_loss();
  double t2 = train_loss();
  CHECK(t1 != t2);  // masks advance the rng
  CHECK(t1 != a);

  Rng replay(99);
  Tape<double> tape;
  double r1 = pair_loss(tape, model, premise, hypothesis, 0, &replay).loss.v[0];
  CHECK(r1 == t1);  // same seed, same masks
}
