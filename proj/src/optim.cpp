#include "lms/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

namespace lms {

template <class T>
void adam_step(AdamState<T>& state, ParameterStore<T>& store) {
  auto& items = store.items();
  if (state.m.empty()) {
    state.m.resize(items.size());
    state.v.resize(items.size());
    for (size_t i = 0; i < items.size(); ++i) {
      state.m[i].assign(items[i]->value.v.size(), T(0));
      state.v[i].assign(items[i]->value.v.size(), T(0));
    }
  }
  if (state.m.size() != items.size()) throw_usage("adam_step: parameter count changed under the optimizer");
  ++state.step;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < items.size(); ++i) {
    auto& p = *items[i];
    if (!p.trainable) continue;
    if (state.m[i].size() != p.value.v.size())
      throw_usage("adam_step: moment shape differs from " + p.name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t k = 0; k < m.size(); ++k) {
      T g = p.grad.v[k];
      m[k] = static_cast<T>(state.beta1) * m[k] + static_cast<T>(1.0 - state.beta1) * g;
      v[k] = static_cast<T>(state.beta2) * v[k] + static_cast<T>(1.0 - state.beta2) * g * g;
      double mhat = static_cast<double>(m[k]) / bc1;
      double vhat = static_cast<double>(v[k]) / bc2;
      p.value.v[k] -= static_cast<T>(state.alpha * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template <class T>
void add_l2_gradients(ParameterStore<T>& store, double lambda) {
  if (lambda == 0.0) return;
  for (auto& p : store.items()) {
    if (!p->trainable || !p->weight_decay) continue;
    for (size_t k = 0; k < p->value.v.size(); ++k)
      p->grad.v[k] += static_cast<T>(2.0 * lambda) * p->value.v[k];
  }
}

template <class T>
double clip_gradients(ParameterStore<T>& store, double max_norm) {
  double sq = 0.0;
  for (auto& p : store.items()) {
    if (!p->trainable) continue;
    for (T g : p->grad.v) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    T scale = static_cast<T>(max_norm / norm);
    for (auto& p : store.items()) {
      if (!p->trainable) continue;
      for (T& g : p->grad.v) g *= scale;
    }
  }
  return norm;
}

std::string metrics_line(int64_t step, double train_loss, double dev_accuracy, double wall_seconds) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "{\"step\": %lld, \"train_loss\": %.17g, \"dev_accuracy\": %.17g, \"wall_seconds\": %.17g}",
                static_cast<long long>(step), train_loss, dev_accuracy, wall_seconds);
  return buf;
}

namespace {

// One batch: forward/backward per example summed into Parameter::grad, then
// scaled by 1/batch. Workers take contiguous chunks and collect gradients
// locally; the single writer applies them in worker order, so the result does
// not depend on scheduling.
template <class T>
double run_batch_step(ParameterStore<T>& store, const std::vector<size_t>& batch, const TrainOptions& opt,
                      const TrainCallbacks<T>& cb, int64_t step_index) {
  store.zero_grads();
  int64_t workers = std::max<int64_t>(1, opt.parallelism);
  size_t n = batch.size();
  size_t chunk = (n + static_cast<size_t>(workers) - 1) / static_cast<size_t>(workers);

  std::vector<double> sums(static_cast<size_t>(workers), 0.0);
  std::vector<std::vector<std::pair<Parameter<T>*, std::vector<T>>>> collected(static_cast<size_t>(workers));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));

  auto work = [&](size_t w) {
    try {
      size_t lo = w * chunk, hi = std::min(n, lo + chunk);
      Rng rng(Rng::mix(Rng::mix(opt.seed, 0xD120u), static_cast<uint64_t>(step_index) * 64 + w));
      for (size_t i = lo; i < hi; ++i) {
        Tape<T> tape;
        auto ce = cb.example_loss(tape, batch[i], &rng);
        sums[w] += static_cast<double>(ce.v[0]);
        auto grads = tape.backward_local(ce);
        if (collected[w].empty()) {
          collected[w] = std::move(grads);
        } else {
          for (auto& [param, g] : grads) {
            bool merged = false;
            for (auto& [have, acc] : collected[w])
              if (have == param) {
                for (size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
                merged = true;
                break;
              }
            if (!merged) collected[w].emplace_back(param, std::move(g));
          }
        }
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int64_t w = 0; w < workers; ++w) pool.emplace_back(work, static_cast<size_t>(w));
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  double ce_sum = 0.0;
  for (int64_t w = 0; w < workers; ++w) {
    ce_sum += sums[static_cast<size_t>(w)];
    for (auto& [param, g] : collected[static_cast<size_t>(w)])
      for (size_t k = 0; k < g.size(); ++k) param->grad.v[k] += g[k];
  }
  T inv = static_cast<T>(1.0 / static_cast<double>(n));
  for (auto& p : store.items())
    for (T& g : p->grad.v) g *= inv;
  return ce_sum / static_cast<double>(n);
}

}  // namespace

template <class T>
TrainResult train_loop(ParameterStore<T>& store, int64_t n_train, const TrainOptions& opt,
                       const TrainCallbacks<T>& cb) {
  if (n_train <= 0) throw_data("training set is empty");
  if (opt.batch_size < 1) throw_usage("batch_size must be positive");
  if (opt.eval_every < 1) throw_usage("eval_every must be positive");
  if (opt.patience < 1) throw_usage("patience must be positive");
  if (opt.epochs < 1) throw_usage("epochs must be positive");
  if (opt.parallelism < 1) throw_usage("parallelism must be positive");
  if (!cb.example_loss || !cb.dev_accuracy) throw_usage("train_loop: missing callbacks");

  AdamState<T> adam;
  adam.alpha = opt.alpha;
  adam.beta1 = opt.beta1;
  adam.beta2 = opt.beta2;
  adam.eps = opt.adam_eps;

  TrainResult res;
  auto t0 = std::chrono::steady_clock::now();
  double window_sum = 0.0;
  int64_t window_steps = 0;
  int64_t since_best = 0;
  int64_t last_eval_step = -1;

  auto evaluate = [&](int64_t step) {
    double dev = cb.dev_accuracy();
    ++res.evals;
    last_eval_step = step;
    double train_loss = window_steps > 0 ? window_sum / static_cast<double>(window_steps) : 0.0;
    window_sum = 0.0;
    window_steps = 0;
    double wall = 0.0;
    if (opt.timing)
      wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cb.emit) cb.emit(metrics_line(step, train_loss, dev, wall));
    if (dev > res.best_dev) {
      res.best_dev = dev;
      res.best_step = step;
      since_best = 0;
      if (cb.on_best) cb.on_best(step, dev);
    } else {
      ++since_best;
    }
    return since_best >= opt.patience;
  };

  std::vector<size_t> order(static_cast<size_t>(n_train));
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  int64_t step = 0;
  bool stop = false;
  for (int64_t epoch = 0; epoch < opt.epochs && !stop; ++epoch) {
    Rng shuffle_rng(Rng::mix(opt.seed, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(shuffle_rng.below(static_cast<int64_t>(i)));
      std::swap(order[i - 1], order[j]);
    }
    for (size_t lo = 0; lo < order.size() && !stop; lo += static_cast<size_t>(opt.batch_size)) {
      size_t hi = std::min(order.size(), lo + static_cast<size_t>(opt.batch_size));
      std::vector<size_t> batch(order.begin() + static_cast<long>(lo), order.begin() + static_cast<long>(hi));
      ++step;
      double ce = run_batch_step(store, batch, opt, cb, step);
      double total = ce + opt.lambda * static_cast<double>(store.l2_squared_norm());
      if (!std::isfinite(total))
        throw_internal("training diverged: non-finite loss at step " + std::to_string(step));
      if (cb.on_step) cb.on_step(step, ce, total);  // parameters still at the loss point
      add_l2_gradients(store, opt.lambda);
      if (opt.clip_norm > 0.0) clip_gradients(store, opt.clip_norm);
      adam_step(adam, store);
      window_sum += total;
      ++window_steps;
      if (step % opt.eval_every == 0) stop = evaluate(step);
    }
  }
  if (last_eval_step != step && !stop) evaluate(step);
  res.steps = step;
  res.early_stopped = stop;
  return res;
}

template void adam_step<float>(AdamState<float>&, ParameterStore<float>&);
template void adam_step<double>(AdamState<double>&, ParameterStore<double>&);
template void add_l2_gradients<float>(ParameterStore<float>&, double);
template void add_l2_gradients<double>(ParameterStore<double>&, double);
template double clip_gradients<float>(ParameterStore<float>&, double);
template double clip_gradients<double>(ParameterStore<double>&, double);
template TrainResult train_loop<float>(ParameterStore<float>&, int64_t, const TrainOptions&,
                                       const TrainCallbacks<float>&);
template TrainResult train_loop<double>(ParameterStore<double>&, int64_t, const TrainOptions&,
                                        const TrainCallbacks<double>&);

}  // namespace lms
