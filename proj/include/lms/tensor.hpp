#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "lms/error.hpp"

namespace lms {

// Dense row-major shape, rank 0..3. Rank 0 is a scalar of size 1.
struct Shape {
  int rank = 0;
  std::array<int64_t, 3> dim{1, 1, 1};

  Shape() = default;
  Shape(std::initializer_list<int64_t> extents) {
    if (extents.size() > 3) throw_usage("tensor rank > 3 is not supported");
    for (int64_t e : extents) {
      if (e <= 0) throw_usage("tensor extents must be positive, got " + std::to_string(e));
      dim[static_cast<size_t>(rank++)] = e;
    }
  }

  static Shape scalar() { return Shape{}; }
  static Shape vec(int64_t n) { return Shape{n}; }
  static Shape mat(int64_t r, int64_t c) { return Shape{r, c}; }
  static Shape cube(int64_t a, int64_t b, int64_t c) { return Shape{a, b, c}; }

  int64_t size() const {
    int64_t s = 1;
    for (int i = 0; i < rank; ++i) s *= dim[static_cast<size_t>(i)];
    return s;
  }

  int64_t operator[](int i) const { return dim[static_cast<size_t>(i)]; }

  bool operator==(const Shape& o) const { return rank == o.rank && dim == o.dim; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    if (rank == 0) return "[scalar]";
    std::string s = "[";
    for (int i = 0; i < rank; ++i) {
      if (i) s += "x";
      s += std::to_string(dim[static_cast<size_t>(i)]);
    }
    return s + "]";
  }
};

template <class T>
class Tape;

// Value plus an optional handle into the tape that recorded it. Tensors with
// node >= 0 must not outlive their tape. Plain tensors (node == -1) are free
// values and can be shared across threads.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> v;
  Tape<T>* tape = nullptr;
  int node = -1;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), v(static_cast<size_t>(s.size()), T(0)) {}
  Tensor(Shape s, std::vector<T> vals) : shape(s), v(std::move(vals)) {
    if (static_cast<int64_t>(v.size()) != shape.size())
      throw_usage("tensor value count " + std::to_string(v.size()) + " does not match shape " + shape.str());
  }

  static Tensor scalar(T x) { return Tensor(Shape::scalar(), {x}); }
  static Tensor vec(std::vector<T> vals) {
    Shape s = Shape::vec(static_cast<int64_t>(vals.size()));
    return Tensor(s, std::move(vals));
  }
  static Tensor mat(int64_t r, int64_t c, std::vector<T> vals) { return Tensor(Shape::mat(r, c), std::move(vals)); }

  int64_t size() const { return shape.size(); }
  bool tracked() const { return node >= 0; }

  // Value-only copy, detached from any tape.
  Tensor detached() const {
    Tensor t;
    t.shape = shape;
    t.v = v;
    return t;
  }

  T& at(int64_t i) { return v[static_cast<size_t>(i)]; }
  T at(int64_t i) const { return v[static_cast<size_t>(i)]; }
  T& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * shape[1] + j)]; }
  T at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * shape[1] + j)]; }
  T& at(int64_t i, int64_t j, int64_t k) { return v[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)]; }
  T at(int64_t i, int64_t j, int64_t k) const { return v[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)]; }
};

}  // namespace lms
