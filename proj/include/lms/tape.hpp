#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "lms/params.hpp"
#include "lms/tensor.hpp"

namespace lms {

// Reverse-mode tape for one forward pass. Operations are recorded in
// evaluation order, which is a topological order by construction; backward()
// walks them once in reverse. Tapes are cheap to create and are meant to be
// discarded after backward() — recursive tree evaluation builds a fresh graph
// per example. A tape must stay on one thread.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<T>& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Tracked leaf holding a copy of `value`.
  Tensor<T> input(const Tensor<T>& value) {
    Tensor<T> t = value.detached();
    t.tape = this;
    t.node = add_node(t.shape, nullptr);
    return t;
  }

  // Tracked leaf bound to a parameter. Repeated use within one pass returns
  // the same node, so gradients of shared parameters accumulate additively.
  Tensor<T> use(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) {
      Tensor<T> t = p.value.detached();
      t.tape = this;
      t.node = it->second;
      return t;
    }
    Tensor<T> t = p.value.detached();
    t.tape = this;
    t.node = add_node(t.shape, &p);
    param_nodes_.emplace(&p, t.node);
    return t;
  }

  int add_node(const Shape& shape, Parameter<T>* bound = nullptr) {
    nodes_.push_back(NodeInfo{shape, bound});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void record(int out_node, BackwardFn fn) { ops_.push_back(OpRec{out_node, std::move(fn)}); }

  // Reverse-topological accumulation from a scalar loss. Gradients of leaves
  // bound to parameters are added into Parameter::grad; per-node gradients
  // stay readable through grad()/grad_tensor() until the next backward().
  void backward(const Tensor<T>& loss) {
    run_backward(loss);
    for (auto& kv : param_nodes_) {
      if (!seen_[static_cast<size_t>(kv.second)]) continue;
      const auto& g = grads_[static_cast<size_t>(kv.second)];
      for (size_t i = 0; i < g.size(); ++i) kv.first->grad.v[i] += g[i];
    }
  }

  // Like backward(), but parameter gradients are returned instead of added
  // into the shared Parameter::grad buffers. Data-parallel workers each call
  // this on their own tape; one writer then applies the results in worker
  // order, touching each parameter's buffer independently of map order.
  std::vector<std::pair<Parameter<T>*, std::vector<T>>> backward_local(const Tensor<T>& loss) {
    run_backward(loss);
    std::vector<std::pair<Parameter<T>*, std::vector<T>>> out;
    out.reserve(param_nodes_.size());
    for (auto& kv : param_nodes_) {
      if (!seen_[static_cast<size_t>(kv.second)]) continue;
      out.emplace_back(kv.first, grads_[static_cast<size_t>(kv.second)]);
    }
    return out;
  }

  // Accumulation buffer for a node, zero-initialized on first touch.
  std::vector<T>& grad_buf(int node) {
    auto& g = grads_[static_cast<size_t>(node)];
    if (!seen_[static_cast<size_t>(node)]) {
      g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].shape.size()), T(0));
      seen_[static_cast<size_t>(node)] = 1;
    }
    return g;
  }

  // Gradient of a tracked tensor after backward(); zeros for untouched leaves.
  Tensor<T> grad_tensor(const Tensor<T>& t) const {
    if (t.tape != this || !t.tracked()) throw_usage("grad_tensor: tensor is not on this tape");
    Tensor<T> g(t.shape);
    if (t.node < static_cast<int>(grads_.size()) && seen_[static_cast<size_t>(t.node)])
      g.v = grads_[static_cast<size_t>(t.node)];
    return g;
  }

  size_t num_nodes() const { return nodes_.size(); }
  size_t num_ops() const { return ops_.size(); }
  const Shape& node_shape(int node) const { return nodes_[static_cast<size_t>(node)].shape; }

 private:
  void run_backward(const Tensor<T>& loss) {
    if (loss.tape != this || !loss.tracked())
      throw_usage("backward: loss tensor is not on this tape");
    if (loss.shape.size() != 1)
      throw_usage("backward: loss must be scalar, got shape " + loss.shape.str());
    grads_.assign(nodes_.size(), {});
    seen_.assign(nodes_.size(), 0);
    grad_buf(loss.node)[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (!seen_[static_cast<size_t>(it->out)]) continue;  // not on a path to the loss
      it->back(*this, grads_[static_cast<size_t>(it->out)]);
    }
  }

  struct NodeInfo {
    Shape shape;
    Parameter<T>* param;
  };
  struct OpRec {
    int out;
    BackwardFn back;
  };

  std::vector<NodeInfo> nodes_;
  std::vector<OpRec> ops_;
  std::unordered_map<Parameter<T>*, int> param_nodes_;
  std::vector<std::vector<T>> grads_;
  std::vector<char> seen_;
};

}  // namespace lms
