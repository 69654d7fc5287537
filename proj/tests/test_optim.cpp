#include <cmath>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lms/model.hpp"
#include "lms/ops.hpp"
#include "lms/optim.hpp"

using namespace lms;

namespace {

// Tiny 3-class linear problem: logits = W x_i + b, fixed features per index.
struct LinearFixture {
  ParameterStore<double> store;
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;

  explicit LinearFixture(size_t n, uint64_t seed = 5) {
    Rng rng(seed);
    store.create("W", Shape::mat(3, 4), Init::UniformSmall, rng, true, true);
    store.create("b", Shape::vec(3), Init::Zero, rng);
    for (size_t i = 0; i < n; ++i) {
      std::vector<double> x(4);
      for (auto& v : x) v = rng.uniform(-1.0, 1.0);
      xs.push_back(x);
      ys.push_back(static_cast<int>(rng.below(3)));
    }
  }

  Tensor<double> loss(Tape<double>& tape, size_t i) {
    auto x = tape.input(Tensor<double>(Shape::vec(4), xs[i]));
    auto logits = ops::add(tape, ops::matvec(tape, tape.use(store.get("W")), x), tape.use(store.get("b")));
    return ops::softmax_cross_entropy(tape, logits, ys[i]);
  }

  double accuracy() {
    size_t hit = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      Tape<double> tape;
      auto x = tape.input(Tensor<double>(Shape::vec(4), xs[i]));
      auto logits = ops::add(tape, ops::matvec(tape, tape.use(store.get("W")), x), tape.use(store.get("b")));
      if (ops::argmax_index(logits.v) == ys[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(xs.size());
  }
};

TrainCallbacks<double> fixture_callbacks(LinearFixture& f, std::vector<std::string>* lines = nullptr) {
  TrainCallbacks<double> cb;
  cb.example_loss = [&f](Tape<double>& t, size_t i, Rng*) { return f.loss(t, i); };
  cb.dev_accuracy = [&f]() { return f.accuracy(); };
  if (lines) cb.emit = [lines](const std::string& s) { lines->push_back(s); };
  return cb;
}

}  // namespace

TEST_CASE("first adam step moves each coordinate by about alpha") {
  Rng rng(1);
  ParameterStore<double> store;
  auto& p = store.create("w", Shape::vec(3), Init::Zero, rng);
  p.value.v = {0.5, -0.25, 1.0};
  p.grad.v = {1.0, -2.0, 0.5};
  AdamState<double> st;
  st.alpha = 1e-3;
  adam_step(st, store);
  CHECK(st.step == 1);
  // bias-corrected mhat/sqrt(vhat) = sign(g) for any constant gradient
  CHECK(p.value.v[0] == doctest::Approx(0.5 - 1e-3).epsilon(1e-6));
  CHECK(p.value.v[1] == doctest::Approx(-0.25 + 1e-3).epsilon(1e-6));
  CHECK(p.value.v[2] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
}

TEST_CASE("zero gradients leave parameters untouched") {
  Rng rng(2);
  ParameterStore<double> store;
  auto& p = store.create("w", Shape::mat(2, 2), Init::UniformSmall, rng);
  auto saved = p.value.v;
  AdamState<double> st;
  for (int i = 0; i < 5; ++i) adam_step(st, store);
  CHECK(p.value.v == saved);
  CHECK(st.step == 5);
}

TEST_CASE("equal gradients produce equal updates") {
  Rng rng(3);
  ParameterStore<double> store;
  auto& a = store.create("a", Shape::vec(4), Init::Zero, rng);
  auto& b = store.create("b", Shape::vec(4), Init::Zero, rng);
  a.value.v = b.value.v = {0.1, 0.2, 0.3, 0.4};
  AdamState<double> st;
  for (int s = 0; s < 3; ++s) {
    for (size_t k = 0; k < 4; ++k) a.grad.v[k] = b.grad.v[k] = 0.3 * (double(k) + 1) * (s % 2 ? -1 : 1);
    adam_step(st, store);
    CHECK(a.value.v == b.value.v);
  }
}

TEST_CASE("adam matches a straight-line recomputation over several steps") {
  Rng rng(4);
  ParameterStore<double> store;
  auto& p = store.create("w", Shape::vec(2), Init::Zero, rng);
  p.value.v = {0.7, -0.3};
  AdamState<double> st;
  st.alpha = 0.01;

  std::vector<double> theta = {0.7, -0.3};
  std::vector<double> m(2, 0.0), v(2, 0.0);
  for (int t = 1; t <= 7; ++t) {
    std::vector<double> g = {std::sin(0.9 * t), std::cos(1.3 * t) - 0.2};
    p.grad.v = g;
    adam_step(st, store);
    for (size_t k = 0; k < 2; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * g[k];
      v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
      double mhat = m[k] / (1.0 - std::pow(0.9, t));
      double vhat = v[k] / (1.0 - std::pow(0.999, t));
      theta[k] -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
      CHECK(p.value.v[k] == doctest::Approx(theta[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("adam rejects a store whose layout changed") {
  Rng rng(5);
  ParameterStore<double> store;
  store.create("w", Shape::vec(2), Init::Zero, rng);
  AdamState<double> st;
  adam_step(st, store);
  store.create("late", Shape::vec(2), Init::Zero, rng);
  CHECK_THROWS_WITH_AS(adam_step(st, store), "adam_step: parameter count changed under the optimizer", Error);
}

TEST_CASE("l2 gradients hit only weight-decay parameters") {
  Rng rng(6);
  ParameterStore<double> store;
  auto& w = store.create("w", Shape::vec(2), Init::Zero, rng, true, true);
  auto& b = store.create("b", Shape::vec(2), Init::Zero, rng, true, false);
  auto& frozen = store.create("f", Shape::vec(2), Init::Zero, rng, false, true);
  w.value.v = {0.5, -1.5};
  b.value.v = {2.0, 2.0};
  frozen.value.v = {3.0, 3.0};
  add_l2_gradients(store, 0.1);
  CHECK(w.grad.v[0] == doctest::Approx(2 * 0.1 * 0.5));
  CHECK(w.grad.v[1] == doctest::Approx(2 * 0.1 * -1.5));
  CHECK(b.grad.v[0] == 0.0);
  CHECK(frozen.grad.v[0] == 0.0);
}

TEST_CASE("gradient clipping caps the global norm exactly") {
  Rng rng(7);
  ParameterStore<double> store;
  auto& a = store.create("a", Shape::vec(3), Init::Zero, rng);
  auto& b = store.create("b", Shape::vec(1), Init::Zero, rng);
  a.grad.v = {3.0, 0.0, 4.0};
  b.grad.v = {12.0};  // global norm 13
  double pre = clip_gradients(store, 2.0);
  CHECK(pre == doctest::Approx(13.0));
  double post = 0.0;
  for (auto& p : store.items())
    for (double g : p->grad.v) post += g * g;
  CHECK(std::sqrt(post) == doctest::Approx(2.0).epsilon(1e-12));

  a.grad.v = {0.3, 0.0, 0.4};
  b.grad.v = {0.0};
  auto saved_a = a.grad.v;
  CHECK(clip_gradients(store, 2.0) == doctest::Approx(0.5));
  CHECK(a.grad.v == saved_a);  // under the threshold: untouched

  b.grad.v = {100.0};
  CHECK(clip_gradients(store, 0.0) == doctest::Approx(std::sqrt(0.25 + 10000.0)));
  CHECK(b.grad.v[0] == 100.0);  // zero threshold disables clipping
}

TEST_CASE("huge weight decay shrinks parameter norms monotonically") {
  Rng rng(8);
  ParameterStore<double> store;
  auto& w = store.create("w", Shape::vec(6), Init::Zero, rng, true, true);
  for (size_t k = 0; k < 6; ++k) w.value.v[k] = (k % 2 ? -1.0 : 1.0) * (0.2 + 0.05 * double(k));
  AdamState<double> st;
  auto norm = [&] {
    double s = 0.0;
    for (double v : w.value.v) s += v * v;
    return std::sqrt(s);
  };
  double prev = norm();
  for (int i = 0; i < 30; ++i) {
    store.zero_grads();
    // small data-like noise, swamped by the decay term
    for (size_t k = 0; k < 6; ++k) w.grad.v[k] = 0.01 * std::sin(1.7 * i + double(k));
    add_l2_gradients(store, 1e3);
    adam_step(st, store);
    double cur = norm();
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("metrics lines are stable json") {
  auto line = metrics_line(250, 0.5, 0.25, 0.0);
  CHECK(line == "{\"step\": 250, \"train_loss\": 0.5, \"dev_accuracy\": 0.25, \"wall_seconds\": 0}");
  auto parsed = nlohmann::json::parse(line);
  CHECK(parsed["step"] == 250);
  CHECK(parsed["dev_accuracy"] == 0.25);
  auto precise = nlohmann::json::parse(metrics_line(1, 1.0 / 3.0, 2.0 / 3.0, 1.5));
  CHECK(precise["train_loss"].get<double>() == 1.0 / 3.0);  // 17 significant digits round-trip
}

TEST_CASE("training is deterministic and improves the linear fixture") {
  std::vector<std::string> lines1, lines2;
  TrainOptions opt;
  opt.alpha = 0.05;
  opt.lambda = 1e-5;
  opt.batch_size = 8;
  opt.eval_every = 10;
  opt.epochs = 20;
  opt.seed = 42;
  opt.timing = false;

  LinearFixture f1(40), f2(40);
  auto r1 = train_loop<double>(f1.store, 40, opt, fixture_callbacks(f1, &lines1));
  auto r2 = train_loop<double>(f2.store, 40, opt, fixture_callbacks(f2, &lines2));
  CHECK(lines1 == lines2);  // byte-identical metrics with timing off
  CHECK(!lines1.empty());
  CHECK(r1.best_dev == r2.best_dev);
  CHECK(r1.best_dev > 0.55);  // linearly separable-ish noise floor is ~1/3
  CHECK(r1.steps == 20 * 5);
  for (auto& l : lines1) nlohmann::json::parse(l);  // every record is valid json
}

TEST_CASE("per-step loss decomposes into cross-entropy plus the decay term") {
  LinearFixture f(16);
  TrainOptions opt;
  opt.lambda = 0.01;
  opt.batch_size = 4;
  opt.eval_every = 100;
  opt.epochs = 2;
  auto cb = fixture_callbacks(f);
  int checked = 0;
  cb.on_step = [&](int64_t, double ce, double total) {
    double sq = 0.0;
    for (auto& p : f.store.items())
      if (p->weight_decay)
        for (double v : p->value.v) sq += v * v;
    CHECK(total == doctest::Approx(ce + 0.01 * sq).epsilon(1e-10));
    ++checked;
  };
  train_loop<double>(f.store, 16, opt, cb);
  CHECK(checked == 8);

  // lambda = 0 reports pure cross-entropy
  LinearFixture g(8);
  TrainOptions opt0 = opt;
  opt0.lambda = 0.0;
  opt0.epochs = 1;
  auto cb0 = fixture_callbacks(g);
  cb0.on_step = [&](int64_t, double ce, double total) { CHECK(total == ce); };
  train_loop<double>(g.store, 8, opt0, cb0);
}

TEST_CASE("early stopping fires after patience evaluations without improvement") {
  LinearFixture f(6);
  TrainOptions opt;
  opt.batch_size = 6;
  opt.eval_every = 1;
  opt.patience = 3;
  opt.epochs = 50;
  auto cb = fixture_callbacks(f);
  cb.dev_accuracy = []() { return 0.5; };  // never improves after the first eval
  int best_calls = 0;
  cb.on_best = [&](int64_t, double) { ++best_calls; };
  auto res = train_loop<double>(f.store, 6, opt, cb);
  CHECK(res.early_stopped);
  CHECK(res.evals == 4);  // first sets the best, then three stale
  CHECK(best_calls == 1);
  CHECK(res.best_dev == 0.5);
  CHECK(res.steps == 4);
}

TEST_CASE("training loop validates inputs") {
  LinearFixture f(4);
  TrainOptions opt;
  auto cb = fixture_callbacks(f);
  CHECK_THROWS_WITH_AS(train_loop<double>(f.store, 0, opt, cb), "training set is empty", Error);
  TrainOptions bad = opt;
  bad.batch_size = 0;
  CHECK_THROWS_WITH_AS(train_loop<double>(f.store, 4, bad, cb), "batch_size must be positive", Error);
  TrainOptions bad2 = opt;
  bad2.parallelism = 0;
  CHECK_THROWS_WITH_AS(train_loop<double>(f.store, 4, bad2, cb), "parallelism must be positive", Error);
}

TEST_CASE("non-finite loss aborts with the step in the message") {
  LinearFixture f(4);
  TrainOptions opt;
  opt.batch_size = 2;
  auto cb = fixture_callbacks(f);
  cb.example_loss = [&](Tape<double>& t, size_t, Rng*) {
    return t.input(Tensor<double>::scalar(std::numeric_limits<double>::quiet_NaN()));
  };
  CHECK_THROWS_WITH_AS(train_loop<double>(f.store, 4, opt, cb), "training diverged: non-finite loss at step 1",
                       Error);
  try {
    train_loop<double>(f.store, 4, opt, cb);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Internal);
  }
}

TEST_CASE("parallel workers agree with the single-threaded gradient path") {
  TrainOptions opt;
  opt.alpha = 0.05;
  opt.batch_size = 16;
  opt.eval_every = 5;
  opt.epochs = 4;
  opt.timing = false;

  LinearFixture f1(32), f2(32);
  auto r1 = train_loop<double>(f1.store, 32, opt, fixture_callbacks(f1));
  TrainOptions opt2 = opt;
  opt2.parallelism = 3;
  auto r2 = train_loop<double>(f2.store, 32, opt2, fixture_callbacks(f2));
  CHECK(r1.steps == r2.steps);
  // summation order differs across worker counts; results agree to fp noise
  const auto& w1 = f1.store.get("W").value.v;
  const auto& w2 = f2.store.get("W").value.v;
  for (size_t k = 0; k < w1.size(); ++k) CHECK(w1[k] == doctest::Approx(w2[k]).epsilon(1e-9));
  CHECK(r1.best_dev == doctest::Approx(r2.best_dev));

  // worker exceptions surface on the training thread
  LinearFixture g(8);
  auto cbg = fixture_callbacks(g);
  cbg.example_loss = [&g](Tape<double>& t, size_t i, Rng*) {
    if (i == 3) throw_data("poisoned example");
    return g.loss(t, i);
  };
  TrainOptions optg;
  optg.batch_size = 8;
  optg.parallelism = 4;
  CHECK_THROWS_WITH_AS(train_loop<double>(g.store, 8, optg, cbg), "poisoned example", Error);
}

TEST_CASE("a single pair example is overfit quickly with a hot learning rate") {
  ComposerSpec spec;
  spec.kind = ComposerKind::TreeRnn;
  spec.d = 16;
  spec.d_emb = 8;
  Rng rng(11);
  auto model = make_model<double>(spec, 10, 3, 32, true, 0.0, 0.0, true, rng);
  Sentence premise{{1, 2, 3},
                   {Transition::Shift, Transition::Shift, Transition::Shift, Transition::Reduce,
                    Transition::Reduce}};
  Sentence hypothesis{{4, 5}, {Transition::Shift, Transition::Shift, Transition::Reduce}};

  TrainOptions opt;
  opt.alpha = 3e-2;
  opt.lambda = 0.0;
  opt.batch_size = 1;
  opt.eval_every = 1000;
  opt.epochs = 500;
  TrainCallbacks<double> cb;
  cb.example_loss = [&](Tape<double>& t, size_t, Rng* r) {
    return pair_loss(t, model, premise, hypothesis, 2, r).loss;
  };
  cb.dev_accuracy = [&]() {
    Tape<double> t;
    return pair_loss(t, model, premise, hypothesis, 2, nullptr).pred == 2 ? 1.0 : 0.0;
  };
  double last = 1e9;
  cb.on_step = [&](int64_t, double, double total) { last = total; };
  auto res = train_loop<double>(model.store, 1, opt, cb);
  CHECK(res.steps == 500);
  CHECK(last < 0.01);
  CHECK(res.best_dev == 1.0);
}
