#include "lms/params.hpp"

#include <cmath>

namespace lms {

template <class T>
Parameter<T>& ParameterStore<T>::create(const std::string& name, const Shape& shape, Init init, Rng& rng,
                                        bool trainable, bool weight_decay) {
  if (index_.count(name)) throw_usage("parameter already exists: " + name);
  auto p = std::make_unique<Parameter<T>>();
  p->name = name;
  p->value = Tensor<T>(shape);
  p->grad = Tensor<T>(shape);
  p->trainable = trainable;
  p->weight_decay = weight_decay;
  switch (init) {
    case Init::Zero:
      break;
    case Init::One:
      std::fill(p->value.v.begin(), p->value.v.end(), T(1));
      break;
    case Init::Xavier: {
      int64_t fan_in, fan_out;
      if (shape.rank == 3) {
        fan_in = shape[2];
        fan_out = shape[0] * shape[1];
      } else if (shape.rank == 2) {
        fan_in = shape[1];
        fan_out = shape[0];
      } else {
        fan_in = shape.size();
        fan_out = shape.size();
      }
      double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& v : p->value.v) v = static_cast<T>(rng.uniform(-bound, bound));
      break;
    }
    case Init::UniformSmall:
      for (auto& v : p->value.v) v = static_cast<T>(rng.uniform(-0.05, 0.05));
      break;
    case Init::UniformTiny:
      for (auto& v : p->value.v) v = static_cast<T>(rng.uniform(-0.01, 0.01));
      break;
    case Init::IdentityNoise: {
      if (shape.rank != 2 || shape[0] != shape[1])
        throw_usage("identity init needs a square matrix, got " + shape.str());
      for (auto& v : p->value.v) v = static_cast<T>(rng.uniform(-0.01, 0.01));
      for (int64_t i = 0; i < shape[0]; ++i) p->value.at(i, i) += T(1);
      break;
    }
  }
  index_.emplace(name, items_.size());
  items_.push_back(std::move(p));
  return *items_.back();
}

template <class T>
Parameter<T>& ParameterStore<T>::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw_usage("no such parameter: " + name);
  return *items_[it->second];
}

template <class T>
const Parameter<T>& ParameterStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw_usage("no such parameter: " + name);
  return *items_[it->second];
}

template <class T>
void ParameterStore<T>::zero_grads() {
  for (auto& p : items_) std::fill(p->grad.v.begin(), p->grad.v.end(), T(0));
}

template <class T>
int64_t ParameterStore<T>::total_values() const {
  int64_t n = 0;
  for (auto& p : items_) n += p->size();
  return n;
}

template <class T>
int64_t ParameterStore<T>::total_values_with_prefix(const std::string& prefix) const {
  int64_t n = 0;
  for (auto& p : items_)
    if (p->name.rfind(prefix, 0) == 0) n += p->size();
  return n;
}

template <class T>
T ParameterStore<T>::l2_squared_norm() const {
  T acc = T(0);
  for (auto& p : items_) {
    if (!p->weight_decay) continue;
    for (T v : p->value.v) acc += v * v;
  }
  return acc;
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace lms
