#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lms/rng.hpp"
#include "lms/tape.hpp"

// Tape-recorded tensor operations. Each op validates shapes, computes the
// result eagerly, and records a closure that routes upstream gradients into
// Tape::grad_buf. Closures capture input values by copy; a tape therefore
// owns everything backward() needs even after callers drop their tensors.

namespace lms {
namespace ops {

template <class T>
inline void require_on(const Tape<T>& tape, const Tensor<T>& t, const char* op) {
  if (!t.tracked() || t.tape != &tape)
    throw_usage(std::string(op) + ": argument is not tracked on this tape");
}

template <class T>
inline Tensor<T> make_out(Tape<T>& tape, const Shape& shape) {
  Tensor<T> out(shape);
  out.tape = &tape;
  out.node = tape.add_node(shape);
  return out;
}

template <class T>
inline void accumulate(std::vector<T>& dst, const std::vector<T>& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// ---- elementwise ----

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_on(tape, a, "add");
  require_on(tape, b, "add");
  if (a.shape != b.shape)
    throw_usage("add: shapes differ, " + a.shape.str() + " vs " + b.shape.str());
  Tensor<T> out = make_out(tape, a.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] + b.v[i];
  int an = a.node, bn = b.node;
  tape.record(out.node, [an, bn](Tape<T>& t, const std::vector<T>& u) {
    accumulate(t.grad_buf(an), u);
    accumulate(t.grad_buf(bn), u);
  });
  return out;
}

template <class T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_on(tape, a, "sub");
  require_on(tape, b, "sub");
  if (a.shape != b.shape)
    throw_usage("sub: shapes differ, " + a.shape.str() + " vs " + b.shape.str());
  Tensor<T> out = make_out(tape, a.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] - b.v[i];
  int an = a.node, bn = b.node;
  tape.record(out.node, [an, bn](Tape<T>& t, const std::vector<T>& u) {
    accumulate(t.grad_buf(an), u);
    auto& gb = t.grad_buf(bn);
    for (size_t i = 0; i < gb.size(); ++i) gb[i] -= u[i];
  });
  return out;
}

template <class T>
Tensor<T> hadamard(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_on(tape, a, "hadamard");
  require_on(tape, b, "hadamard");
  if (a.shape != b.shape)
    throw_usage("hadamard: shapes differ, " + a.shape.str() + " vs " + b.shape.str());
  Tensor<T> out = make_out(tape, a.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  int an = a.node, bn = b.node;
  tape.record(out.node, [an, bn, av = a.v, bv = b.v](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    auto& gb = t.grad_buf(bn);
    for (size_t i = 0; i < u.size(); ++i) {
      ga[i] += u[i] * bv[i];
      gb[i] += u[i] * av[i];
    }
  });
  return out;
}

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T c) {
  require_on(tape, a, "scale");
  Tensor<T> out = make_out(tape, a.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = c * a.v[i];
  int an = a.node;
  tape.record(out.node, [an, c](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    for (size_t i = 0; i < u.size(); ++i) ga[i] += c * u[i];
  });
  return out;
}

template <class T>
Tensor<T> tanh_(Tape<T>& tape, const Tensor<T>& a) {
  require_on(tape, a, "tanh");
  Tensor<T> out = make_out(tape, a.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = std::tanh(a.v[i]);
  int an = a.node;
  tape.record(out.node, [an, y = out.v](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    for (size_t i = 0; i < u.size(); ++i) ga[i] += u[i] * (T(1) - y[i] * y[i]);
  });
  return out;
}

template <class T>
Tensor<T> sigmoid_(Tape<T>& tape, const Tensor<T>& a) {
  require_on(tape, a, "sigmoid");
  Tensor<T> out = make_out(tape, a.shape);
  for (size_t i = 0; i < out.v.size(); ++i) {
    T x = a.v[i];
    if (x >= T(0)) {
      out.v[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      T e = std::exp(x);
      out.v[i] = e / (T(1) + e);
    }
  }
  int an = a.node;
  tape.record(out.node, [an, y = out.v](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    for (size_t i = 0; i < u.size(); ++i) ga[i] += u[i] * y[i] * (T(1) - y[i]);
  });
  return out;
}

template <class T>
Tensor<T> relu_(Tape<T>& tape, const Tensor<T>& a) {
  require_on(tape, a, "relu");
  Tensor<T> out = make_out(tape, a.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] > T(0) ? a.v[i] : T(0);
  int an = a.node;
  tape.record(out.node, [an, x = a.v](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    for (size_t i = 0; i < u.size(); ++i)
      if (x[i] > T(0)) ga[i] += u[i];
  });
  return out;
}

// ---- contractions ----

template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_on(tape, a, "matmul");
  require_on(tape, b, "matmul");
  if (a.shape.rank != 2 || b.shape.rank != 2)
    throw_usage("matmul: expects two matrices, got " + a.shape.str() + " and " + b.shape.str());
  if (a.shape[1] != b.shape[0])
    throw_usage("matmul: inner extents differ, " + a.shape.str() + " vs " + b.shape.str());
  int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor<T> out = make_out(tape, Shape::mat(m, n));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) {
      T aip = a.at(i, p);
      if (aip == T(0)) continue;
      for (int64_t j = 0; j < n; ++j) out.at(i, j) += aip * b.at(p, j);
    }
  int an = a.node, bn = b.node;
  tape.record(out.node, [an, bn, av = a.v, bv = b.v, m, k, n](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    auto& gb = t.grad_buf(bn);
    // dA = U * B^T, dB = A^T * U
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        T uij = u[static_cast<size_t>(i * n + j)];
        if (uij == T(0)) continue;
        for (int64_t p = 0; p < k; ++p) {
          ga[static_cast<size_t>(i * k + p)] += uij * bv[static_cast<size_t>(p * n + j)];
          gb[static_cast<size_t>(p * n + j)] += uij * av[static_cast<size_t>(i * k + p)];
        }
      }
  });
  return out;
}

template <class T>
Tensor<T> matvec(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& x) {
  require_on(tape, a, "matvec");
  require_on(tape, x, "matvec");
  if (a.shape.rank != 2 || x.shape.rank != 1)
    throw_usage("matvec: expects matrix and vector, got " + a.shape.str() + " and " + x.shape.str());
  if (a.shape[1] != x.shape[0])
    throw_usage("matvec: inner extents differ, " + a.shape.str() + " vs " + x.shape.str());
  int64_t m = a.shape[0], k = a.shape[1];
  Tensor<T> out = make_out(tape, Shape::vec(m));
  for (int64_t i = 0; i < m; ++i) {
    T acc = T(0);
    for (int64_t p = 0; p < k; ++p) acc += a.at(i, p) * x.at(p);
    out.at(i) = acc;
  }
  int an = a.node, xn = x.node;
  tape.record(out.node, [an, xn, av = a.v, xv = x.v, m, k](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    auto& gx = t.grad_buf(xn);
    for (int64_t i = 0; i < m; ++i) {
      T ui = u[static_cast<size_t>(i)];
      if (ui == T(0)) continue;
      for (int64_t p = 0; p < k; ++p) {
        ga[static_cast<size_t>(i * k + p)] += ui * xv[static_cast<size_t>(p)];
        gx[static_cast<size_t>(p)] += ui * av[static_cast<size_t>(i * k + p)];
      }
    }
  });
  return out;
}

// out[i,j] = sum_k W[i,j,k] * x[k]
template <class T>
Tensor<T> contract3(Tape<T>& tape, const Tensor<T>& w, const Tensor<T>& x) {
  require_on(tape, w, "contract3");
  require_on(tape, x, "contract3");
  if (w.shape.rank != 3 || x.shape.rank != 1)
    throw_usage("contract3: expects rank-3 and vector, got " + w.shape.str() + " and " + x.shape.str());
  if (w.shape[2] != x.shape[0])
    throw_usage("contract3: last extent differs from vector, " + w.shape.str() + " vs " + x.shape.str());
  int64_t a = w.shape[0], b = w.shape[1], c = w.shape[2];
  Tensor<T> out = make_out(tape, Shape::mat(a, b));
  for (int64_t i = 0; i < a; ++i)
    for (int64_t j = 0; j < b; ++j) {
      T acc = T(0);
      for (int64_t k = 0; k < c; ++k) acc += w.at(i, j, k) * x.at(k);
      out.at(i, j) = acc;
    }
  int wn = w.node, xn = x.node;
  tape.record(out.node, [wn, xn, wv = w.v, xv = x.v, a, b, c](Tape<T>& t, const std::vector<T>& u) {
    auto& gw = t.grad_buf(wn);
    auto& gx = t.grad_buf(xn);
    for (int64_t i = 0; i < a; ++i)
      for (int64_t j = 0; j < b; ++j) {
        T uij = u[static_cast<size_t>(i * b + j)];
        if (uij == T(0)) continue;
        size_t base = static_cast<size_t>((i * b + j) * c);
        for (int64_t k = 0; k < c; ++k) {
          gw[base + static_cast<size_t>(k)] += uij * xv[static_cast<size_t>(k)];
          gx[static_cast<size_t>(k)] += uij * wv[base + static_cast<size_t>(k)];
        }
      }
  });
  return out;
}

// out[s] = sum_{i,j} x[i] * V[s,i,j] * y[j]
template <class T>
Tensor<T> bilinear(Tape<T>& tape, const Tensor<T>& v3, const Tensor<T>& x, const Tensor<T>& y) {
  require_on(tape, v3, "bilinear");
  require_on(tape, x, "bilinear");
  require_on(tape, y, "bilinear");
  if (v3.shape.rank != 3 || x.shape.rank != 1 || y.shape.rank != 1)
    throw_usage("bilinear: expects rank-3 plus two vectors, got " + v3.shape.str() + ", " + x.shape.str() + ", " +
                y.shape.str());
  if (v3.shape[1] != x.shape[0] || v3.shape[2] != y.shape[0])
    throw_usage("bilinear: extents do not line up, " + v3.shape.str() + " with " + x.shape.str() + " and " +
                y.shape.str());
  int64_t s = v3.shape[0], n = v3.shape[1], m = v3.shape[2];
  Tensor<T> out = make_out(tape, Shape::vec(s));
  for (int64_t a = 0; a < s; ++a) {
    T acc = T(0);
    for (int64_t i = 0; i < n; ++i) {
      if (x.at(i) == T(0)) continue;
      for (int64_t j = 0; j < m; ++j) acc += x.at(i) * v3.at(a, i, j) * y.at(j);
    }
    out.at(a) = acc;
  }
  int vn = v3.node, xn = x.node, yn = y.node;
  tape.record(out.node,
              [vn, xn, yn, vv = v3.v, xv = x.v, yv = y.v, s, n, m](Tape<T>& t, const std::vector<T>& u) {
                auto& gv = t.grad_buf(vn);
                auto& gx = t.grad_buf(xn);
                auto& gy = t.grad_buf(yn);
                for (int64_t a = 0; a < s; ++a) {
                  T ua = u[static_cast<size_t>(a)];
                  if (ua == T(0)) continue;
                  for (int64_t i = 0; i < n; ++i) {
                    size_t base = static_cast<size_t>((a * n + i) * m);
                    T xi = xv[static_cast<size_t>(i)];
                    T acc_i = T(0);
                    for (int64_t j = 0; j < m; ++j) {
                      T vij = vv[base + static_cast<size_t>(j)];
                      gv[base + static_cast<size_t>(j)] += ua * xi * yv[static_cast<size_t>(j)];
                      gy[static_cast<size_t>(j)] += ua * xi * vij;
                      acc_i += vij * yv[static_cast<size_t>(j)];
                    }
                    gx[static_cast<size_t>(i)] += ua * acc_i;
                  }
                }
              });
  return out;
}

// ---- shape rearrangement ----

template <class T>
Tensor<T> concat(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_on(tape, a, "concat");
  require_on(tape, b, "concat");
  if (a.shape.rank != 1 || b.shape.rank != 1)
    throw_usage("concat: expects two vectors, got " + a.shape.str() + " and " + b.shape.str());
  int64_t n = a.shape[0], m = b.shape[0];
  Tensor<T> out = make_out(tape, Shape::vec(n + m));
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i);
  for (int64_t i = 0; i < m; ++i) out.at(n + i) = b.at(i);
  int an = a.node, bn = b.node;
  tape.record(out.node, [an, bn, n, m](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    auto& gb = t.grad_buf(bn);
    for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += u[static_cast<size_t>(i)];
    for (int64_t i = 0; i < m; ++i) gb[static_cast<size_t>(i)] += u[static_cast<size_t>(n + i)];
  });
  return out;
}

template <class T>
Tensor<T> slice(Tape<T>& tape, const Tensor<T>& a, int64_t lo, int64_t hi) {
  require_on(tape, a, "slice");
  if (a.shape.rank != 1) throw_usage("slice: expects a vector, got " + a.shape.str());
  if (lo < 0 || hi > a.shape[0] || lo >= hi)
    throw_usage("slice: range [" + std::to_string(lo) + "," + std::to_string(hi) + ") invalid for " + a.shape.str());
  Tensor<T> out = make_out(tape, Shape::vec(hi - lo));
  for (int64_t i = lo; i < hi; ++i) out.at(i - lo) = a.at(i);
  int an = a.node;
  tape.record(out.node, [an, lo](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    for (size_t i = 0; i < u.size(); ++i) ga[static_cast<size_t>(lo) + i] += u[i];
  });
  return out;
}

// Stack A on top of B: [r1 x c] and [r2 x c] -> [(r1+r2) x c].
template <class T>
Tensor<T> concat_rows(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_on(tape, a, "concat_rows");
  require_on(tape, b, "concat_rows");
  if (a.shape.rank != 2 || b.shape.rank != 2 || a.shape[1] != b.shape[1])
    throw_usage("concat_rows: column counts differ, " + a.shape.str() + " vs " + b.shape.str());
  int64_t r1 = a.shape[0], r2 = b.shape[0], c = a.shape[1];
  Tensor<T> out = make_out(tape, Shape::mat(r1 + r2, c));
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
  int an = a.node, bn = b.node;
  size_t na = a.v.size();
  tape.record(out.node, [an, bn, na](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    auto& gb = t.grad_buf(bn);
    for (size_t i = 0; i < na; ++i) ga[i] += u[i];
    for (size_t i = na; i < u.size(); ++i) gb[i - na] += u[i];
  });
  return out;
}

// Row-major reshape matrix -> vector. Gradient is the inverse reshape.
template <class T>
Tensor<T> vectorize(Tape<T>& tape, const Tensor<T>& a) {
  require_on(tape, a, "vectorize");
  if (a.shape.rank != 2) throw_usage("vectorize: expects a matrix, got " + a.shape.str());
  Tensor<T> out = make_out(tape, Shape::vec(a.shape.size()));
  out.v = a.v;
  int an = a.node;
  tape.record(out.node, [an](Tape<T>& t, const std::vector<T>& u) { accumulate(t.grad_buf(an), u); });
  return out;
}

template <class T>
Tensor<T> to_matrix(Tape<T>& tape, const Tensor<T>& a, int64_t r, int64_t c) {
  require_on(tape, a, "to_matrix");
  if (a.shape.rank != 1 || a.shape[0] != r * c)
    throw_usage("to_matrix: cannot reshape " + a.shape.str() + " to " + Shape::mat(r, c).str());
  Tensor<T> out = make_out(tape, Shape::mat(r, c));
  out.v = a.v;
  int an = a.node;
  tape.record(out.node, [an](Tape<T>& t, const std::vector<T>& u) { accumulate(t.grad_buf(an), u); });
  return out;
}

// Slab lookup from a stack of matrices [n x r x c] -> [r x c].
template <class T>
Tensor<T> slab(Tape<T>& tape, const Tensor<T>& stack, int64_t index) {
  require_on(tape, stack, "slab");
  if (stack.shape.rank != 3) throw_usage("slab: expects a rank-3 tensor, got " + stack.shape.str());
  if (index < 0 || index >= stack.shape[0])
    throw_usage("slab: index " + std::to_string(index) + " out of range for " + stack.shape.str());
  int64_t r = stack.shape[1], c = stack.shape[2];
  Tensor<T> out = make_out(tape, Shape::mat(r, c));
  size_t base = static_cast<size_t>(index * r * c);
  std::copy(stack.v.begin() + base, stack.v.begin() + base + static_cast<size_t>(r * c), out.v.begin());
  int sn = stack.node;
  tape.record(out.node, [sn, base](Tape<T>& t, const std::vector<T>& u) {
    auto& gs = t.grad_buf(sn);
    for (size_t i = 0; i < u.size(); ++i) gs[base + i] += u[i];
  });
  return out;
}

// Row lookup from an embedding table [rows x width] -> [width].
template <class T>
Tensor<T> row(Tape<T>& tape, const Tensor<T>& table, int64_t index) {
  require_on(tape, table, "row");
  if (table.shape.rank != 2) throw_usage("row: expects a matrix, got " + table.shape.str());
  if (index < 0 || index >= table.shape[0])
    throw_usage("row: index " + std::to_string(index) + " out of range for " + table.shape.str());
  int64_t w = table.shape[1];
  Tensor<T> out = make_out(tape, Shape::vec(w));
  for (int64_t j = 0; j < w; ++j) out.at(j) = table.at(index, j);
  int tn = table.node;
  tape.record(out.node, [tn, index, w](Tape<T>& t, const std::vector<T>& u) {
    auto& gt = t.grad_buf(tn);
    for (int64_t j = 0; j < w; ++j) gt[static_cast<size_t>(index * w + j)] += u[static_cast<size_t>(j)];
  });
  return out;
}

// ---- reductions and losses ----

template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
  require_on(tape, a, "sum");
  Tensor<T> out = make_out(tape, Shape::scalar());
  T acc = T(0);
  for (T x : a.v) acc += x;
  out.v[0] = acc;
  int an = a.node;
  tape.record(out.node, [an](Tape<T>& t, const std::vector<T>& u) {
    auto& ga = t.grad_buf(an);
    for (auto& g : ga) g += u[0];
  });
  return out;
}

template <class T>
std::vector<T> softmax_values(const std::vector<T>& logits) {
  T mx = logits[0];
  for (T x : logits) mx = std::max(mx, x);
  std::vector<T> p(logits.size());
  T z = T(0);
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& x : p) x /= z;
  return p;
}

inline int argmax_index(const std::vector<float>& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}
inline int argmax_index(const std::vector<double>& v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}

// -log softmax(logits)[target], with max subtraction. Optionally reports the
// softmax distribution so eval paths reuse the same numerics.
template <class T>
Tensor<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, int64_t target,
                                std::vector<T>* probs_out = nullptr) {
  require_on(tape, logits, "softmax_cross_entropy");
  if (logits.shape.rank != 1)
    throw_usage("softmax_cross_entropy: expects a vector of logits, got " + logits.shape.str());
  if (target < 0 || target >= logits.shape[0])
    throw_usage("softmax_cross_entropy: target " + std::to_string(target) + " out of range for " +
                logits.shape.str());
  std::vector<T> p = softmax_values(logits.v);
  if (probs_out) *probs_out = p;
  T mx = logits.v[0];
  for (T x : logits.v) mx = std::max(mx, x);
  T z = T(0);
  for (T x : logits.v) z += std::exp(x - mx);
  Tensor<T> out = make_out(tape, Shape::scalar());
  out.v[0] = std::log(z) - (logits.v[static_cast<size_t>(target)] - mx);
  int ln = logits.node;
  tape.record(out.node, [ln, target, p = std::move(p)](Tape<T>& t, const std::vector<T>& u) {
    auto& gl = t.grad_buf(ln);
    for (size_t i = 0; i < gl.size(); ++i) gl[i] += u[0] * p[i];
    gl[static_cast<size_t>(target)] -= u[0];
  });
  return out;
}

// Normalizes over all elements with population variance, then applies an
// elementwise gain and bias of the same shape.
template <class T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
  require_on(tape, x, "layer_norm");
  require_on(tape, gain, "layer_norm");
  require_on(tape, bias, "layer_norm");
  if (x.shape != gain.shape || x.shape != bias.shape)
    throw_usage("layer_norm: shapes differ, " + x.shape.str() + " with gain " + gain.shape.str() + " and bias " +
                bias.shape.str());
  const T eps = T(1e-6);
  size_t n = x.v.size();
  T mu = T(0);
  for (T v : x.v) mu += v;
  mu /= static_cast<T>(n);
  T var = T(0);
  for (T v : x.v) var += (v - mu) * (v - mu);
  var /= static_cast<T>(n);
  T inv_sd = T(1) / std::sqrt(var + eps);
  std::vector<T> xhat(n);
  Tensor<T> out = make_out(tape, x.shape);
  for (size_t i = 0; i < n; ++i) {
    xhat[i] = (x.v[i] - mu) * inv_sd;
    out.v[i] = xhat[i] * gain.v[i] + bias.v[i];
  }
  int xn = x.node, gn = gain.node, bn = bias.node;
  tape.record(out.node, [xn, gn, bn, xhat = std::move(xhat), gv = gain.v, inv_sd, n](Tape<T>& t,
                                                                                     const std::vector<T>& u) {
    auto& gx = t.grad_buf(xn);
    auto& gg = t.grad_buf(gn);
    auto& gb = t.grad_buf(bn);
    // dxhat[i] = u[i]*gain[i]; dx = inv_sd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
    T mean_d = T(0), mean_dx = T(0);
    for (size_t i = 0; i < n; ++i) {
      T d = u[i] * gv[i];
      mean_d += d;
      mean_dx += d * xhat[i];
    }
    mean_d /= static_cast<T>(n);
    mean_dx /= static_cast<T>(n);
    for (size_t i = 0; i < n; ++i) {
      T d = u[i] * gv[i];
      gx[i] += inv_sd * (d - mean_d - xhat[i] * mean_dx);
      gg[i] += u[i] * xhat[i];
      gb[i] += u[i];
    }
  });
  return out;
}

// Inverted dropout. Callers skip the call entirely in eval mode; with p == 0
// this is the identity (no node added).
template <class T>
Tensor<T> dropout(Tape<T>& tape, const Tensor<T>& x, double p, Rng& rng) {
  require_on(tape, x, "dropout");
  if (p < 0.0 || p >= 1.0) throw_usage("dropout: rate must be in [0,1), got " + std::to_string(p));
  if (p == 0.0) return x;
  T keep_scale = T(1.0 / (1.0 - p));
  std::vector<T> mask(x.v.size());
  for (auto& m : mask) m = rng.bernoulli(p) ? T(0) : keep_scale;
  Tensor<T> out = make_out(tape, x.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = x.v[i] * mask[i];
  int xn = x.node;
  tape.record(out.node, [xn, mask = std::move(mask)](Tape<T>& t, const std::vector<T>& u) {
    auto& gx = t.grad_buf(xn);
    for (size_t i = 0; i < u.size(); ++i) gx[i] += u[i] * mask[i];
  });
  return out;
}

}  // namespace ops
}  // namespace lms
