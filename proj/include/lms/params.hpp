#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "lms/rng.hpp"
#include "lms/tensor.hpp"

namespace lms {

// Named trainable tensor. Parameters live outside any tape; each forward pass
// binds them to fresh tape leaves and backward() accumulates into .grad.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
  // Included in the L2 regularization term. Weights yes; biases, layer-norm
  // gains/biases and embeddings no.
  bool weight_decay = false;

  int64_t size() const { return value.size(); }
};

enum class Init {
  Zero,
  One,
  // Uniform in +-sqrt(6 / (fan_in + fan_out)). For rank-3 tensors the last
  // extent is fan-in and the product of the first two is fan-out.
  Xavier,
  UniformSmall,   // U(-0.05, 0.05)
  UniformTiny,    // U(-0.01, 0.01)
  IdentityNoise,  // I + U(-0.01, 0.01), square matrices
};

template <class T>
class ParameterStore {
 public:
  Parameter<T>& create(const std::string& name, const Shape& shape, Init init, Rng& rng,
                       bool trainable = true, bool weight_decay = false);

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Parameter<T>& get(const std::string& name);
  const Parameter<T>& get(const std::string& name) const;

  // Creation order; iteration over this is the canonical deterministic order
  // for optimizer updates and checkpoint layout.
  const std::vector<std::unique_ptr<Parameter<T>>>& items() const { return items_; }

  void zero_grads();
  int64_t total_values() const;
  int64_t total_values_with_prefix(const std::string& prefix) const;
  // Sum of squares over weight_decay parameters.
  T l2_squared_norm() const;

 private:
  std::vector<std::unique_ptr<Parameter<T>>> items_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace lms
