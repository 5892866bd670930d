#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "np2mt/numerics/random.hpp"
#include "np2mt/numerics/tape.hpp"
#include "np2mt/numerics/tensor.hpp"

// Differentiable primitives. Every op validates shapes and records an exact
// vector-Jacobian product. Broadcasting is limited to a trailing-axis row
// vector or a single scalar on the right-hand operand.

namespace np2mt {

namespace detail {

template <typename T>
std::vector<std::size_t> ids_of(std::span<const Var<T>> vars) {
  std::vector<std::size_t> ids;
  ids.reserve(vars.size());
  for (const auto& v : vars) ids.push_back(v.id());
  return ids;
}

enum class Broadcast { kSame, kRow, kScalar };

template <typename T>
Broadcast broadcast_kind(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw ShapeError(std::string(op) + ": cannot combine " +
                   shape_string(a.shape()) + " with " + shape_string(b.shape()));
}

inline std::size_t bindex(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::kSame: return i;
    case Broadcast::kRow: return i % cols;
    default: return 0;
  }
}

template <typename T>
Shape matrix_shape(std::size_t rows, std::size_t cols) {
  return Shape{rows, cols};
}

// Numerically stable log(sum(exp(v))). Returns -inf when every entry is -inf.
template <typename T>
T logsumexp_values(std::span<const T> v) {
  if (v.empty()) throw NumericError("empty reduction");
  T m = *std::max_element(v.begin(), v.end());
  if (m == -std::numeric_limits<T>::infinity()) return m;
  T s = T(0);
  for (T x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace detail

/// log(sum(exp(values))) on plain numbers.
template <typename T>
T logsumexp(std::span<const T> values) {
  return detail::logsumexp_values(values);
}

template <typename T>
T logsumexp(const std::vector<T>& values) {
  return detail::logsumexp_values(std::span<const T>(values));
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k)
    throw ShapeError("matmul: " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  Tensor<T> out(detail::matrix_shape<T>(m, n));
  kernels::gemm_nn(av.data(), bv.data(), out.data(), m, k, n, false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {a, b},
                         [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
                           const T* g = t.grad_ref(self).data();
                           if (t.needs_grad(ia))
                             kernels::gemm_nt(g, t.value(ib).data(),
                                              t.grad_ref(ia).data(), m, n, k, true);
                           if (t.needs_grad(ib))
                             kernels::gemm_tn_acc(t.value(ia).data(), g,
                                                  t.grad_ref(ib).data(), m, k, n);
                         });
}

/// a * b^T
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k)
    throw ShapeError("matmul_nt: " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()) + "^T");
  Tensor<T> out(detail::matrix_shape<T>(m, n));
  kernels::gemm_nt(av.data(), bv.data(), out.data(), m, k, n, false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul_nt", std::move(out), {a, b},
                         [ia, ib, m, k, n](Tape<T>& t, std::size_t self) {
                           const T* g = t.grad_ref(self).data();
                           if (t.needs_grad(ia))
                             kernels::gemm_nn(g, t.value(ib).data(),
                                              t.grad_ref(ia).data(), m, n, k, true);
                           if (t.needs_grad(ib))
                             kernels::gemm_tn_acc(g, t.value(ia).data(),
                                                  t.grad_ref(ib).data(), m, n, k);
                         });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  auto kind = detail::broadcast_kind("add", av, bv);
  Tensor<T> out = av;
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] += bv[detail::bindex(kind, i, cols)];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("add", std::move(out), {a, b},
                         [ia, ib, kind, cols](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad_ref(self);
                           if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                           if (t.needs_grad(ib)) {
                             auto& gb = t.grad_ref(ib);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               gb[detail::bindex(kind, i, cols)] += g[i];
                           }
                         });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  auto kind = detail::broadcast_kind("sub", av, bv);
  Tensor<T> out = av;
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] -= bv[detail::bindex(kind, i, cols)];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("sub", std::move(out), {a, b},
                         [ia, ib, kind, cols](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad_ref(self);
                           if (t.needs_grad(ia)) t.grad_ref(ia) += g;
                           if (t.needs_grad(ib)) {
                             auto& gb = t.grad_ref(ib);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               gb[detail::bindex(kind, i, cols)] -= g[i];
                           }
                         });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  auto kind = detail::broadcast_kind("mul", av, bv);
  Tensor<T> out = av;
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] *= bv[detail::bindex(kind, i, cols)];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("mul", std::move(out), {a, b},
                         [ia, ib, kind, cols](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad_ref(self);
                           const auto& x = t.value(ia);
                           const auto& y = t.value(ib);
                           if (t.needs_grad(ia)) {
                             auto& ga = t.grad_ref(ia);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               ga[i] += g[i] * y[detail::bindex(kind, i, cols)];
                           }
                           if (t.needs_grad(ib)) {
                             auto& gb = t.grad_ref(ib);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               gb[detail::bindex(kind, i, cols)] += g[i] * x[i];
                           }
                         });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  const std::size_t ia = a.id();
  return a.tape().record("scale", std::move(out), {a},
                         [ia, factor](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad_ref(self);
                           auto& ga = t.grad_ref(ia);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             ga[i] += g[i] * factor;
                         });
}

namespace detail {

// Elementwise map whose derivative is expressed through (input, output).
template <typename T, typename F, typename D>
Var<T> unary(const char* op, const Var<T>& a, F f, D dfdx) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = f(v);
  const std::size_t ia = a.id();
  return a.tape().record(op, std::move(out), {a},
                         [ia, dfdx](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad_ref(self);
                           const auto& x = t.value(ia);
                           const auto& y = t.value(self);
                           auto& ga = t.grad_ref(ia);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             ga[i] += g[i] * dfdx(x[i], y[i]);
                         });
}

}  // namespace detail

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return detail::unary(
      "tanh", a, [](T x) { return std::tanh(x); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(
      "sigmoid", a,
      [](T x) {
        return x >= 0 ? T(1) / (T(1) + std::exp(-x))
                      : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return detail::unary(
      "relu", a, [](T x) { return x > 0 ? x : T(0); },
      [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return detail::unary(
      "exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

/// Row-wise log-softmax over the last axis.
template <typename T>
Var<T> log_softmax_rows(const Var<T>& a) {
  const auto& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  if (cols == 0) throw ShapeError("log_softmax: empty last axis");
  Tensor<T> out = av;
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row_span(r);
    T lse = detail::logsumexp_values(std::span<const T>(row.data(), row.size()));
    for (auto& v : row) v -= lse;
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      "log_softmax", std::move(out), {a},
      [ia, rows, cols](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad_ref(self);
        const auto& y = t.value(self);
        auto& ga = t.grad_ref(ia);
        for (std::size_t r = 0; r < rows; ++r) {
          T gsum = T(0);
          for (std::size_t c = 0; c < cols; ++c) gsum += g(r, c);
          for (std::size_t c = 0; c < cols; ++c)
            ga(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
        }
      });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
  const auto& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor<T> out = av;
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row_span(r);
    T m = *std::max_element(row.begin(), row.end());
    T s = T(0);
    for (auto& v : row) {
      v = std::exp(v - m);
      s += v;
    }
    for (auto& v : row) v /= s;
  }
  const std::size_t ia = a.id();
  return a.tape().record("softmax", std::move(out), {a},
                         [ia, rows, cols](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad_ref(self);
                           const auto& y = t.value(self);
                           auto& ga = t.grad_ref(ia);
                           for (std::size_t r = 0; r < rows; ++r) {
                             T dot = T(0);
                             for (std::size_t c = 0; c < cols; ++c)
                               dot += g(r, c) * y(r, c);
                             for (std::size_t c = 0; c < cols; ++c)
                               ga(r, c) += y(r, c) * (g(r, c) - dot);
                           }
                         });
}

/// log(sum(exp(x))) over every element of x; scalar result.
template <typename T>
Var<T> logsumexp(const Var<T>& a) {
  const auto& av = a.value();
  T lse = detail::logsumexp_values(av.values());
  const std::size_t ia = a.id();
  return a.tape().record("logsumexp", Tensor<T>::scalar(lse), {a},
                         [ia](Tape<T>& t, std::size_t self) {
                           const T g = t.grad_ref(self)[0];
                           const T y = t.value(self)[0];
                           const auto& x = t.value(ia);
                           auto& ga = t.grad_ref(ia);
                           if (y == -std::numeric_limits<T>::infinity()) return;
                           for (std::size_t i = 0; i < x.size(); ++i)
                             ga[i] += g * std::exp(x[i] - y);
                         });
}

/// logsumexp of a list of scalar variables.
template <typename T>
Var<T> logsumexp(std::span<const Var<T>> terms) {
  if (terms.empty()) throw NumericError("empty reduction");
  std::vector<T> xs;
  xs.reserve(terms.size());
  for (const auto& v : terms) {
    if (v.value().size() != 1) throw ShapeError("logsumexp: operands must be scalars");
    xs.push_back(v.value()[0]);
  }
  T lse = detail::logsumexp_values(std::span<const T>(xs));
  auto ids = detail::ids_of(terms);
  return terms.front().tape().record(
      "logsumexp", Tensor<T>::scalar(lse), terms,
      [ids](Tape<T>& t, std::size_t self) {
        const T g = t.grad_ref(self)[0];
        const T y = t.value(self)[0];
        if (y == -std::numeric_limits<T>::infinity()) return;
        for (std::size_t id : ids)
          if (t.needs_grad(id)) t.grad_ref(id)[0] += g * std::exp(t.value(id)[0] - y);
      });
}

template <typename T>
Var<T> logsumexp(const std::vector<Var<T>>& terms) {
  return logsumexp(std::span<const Var<T>>(terms));
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = T(0);
  for (T v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", Tensor<T>::scalar(s), {a},
                         [ia](Tape<T>& t, std::size_t self) {
                           const T g = t.grad_ref(self)[0];
                           for (auto& v : t.grad_ref(ia).values()) v += g;
                         });
}

/// Sum of scalar variables.
template <typename T>
Var<T> sum(std::span<const Var<T>> terms) {
  if (terms.empty()) throw NumericError("empty reduction");
  T s = T(0);
  for (const auto& v : terms) {
    if (v.value().size() != 1) throw ShapeError("sum: operands must be scalars");
    s += v.value()[0];
  }
  auto ids = detail::ids_of(terms);
  return terms.front().tape().record("sum", Tensor<T>::scalar(s), terms,
                                     [ids](Tape<T>& t, std::size_t self) {
                                       const T g = t.grad_ref(self)[0];
                                       for (std::size_t id : ids)
                                         if (t.needs_grad(id)) t.grad_ref(id)[0] += g;
                                     });
}

template <typename T>
Var<T> sum(const std::vector<Var<T>>& terms) {
  return sum(std::span<const Var<T>>(terms));
}

/// Single element (r, c) as a scalar.
template <typename T>
Var<T> pick(const Var<T>& a, std::size_t r, std::size_t c) {
  const auto& av = a.value();
  if (r >= av.rows() || c >= av.cols())
    throw ShapeError("pick: index out of range for " + shape_string(av.shape()));
  const std::size_t flat = r * av.cols() + c;
  const std::size_t ia = a.id();
  return a.tape().record("pick", Tensor<T>::scalar(av[flat]), {a},
                         [ia, flat](Tape<T>& t, std::size_t self) {
                           t.grad_ref(ia)[flat] += t.grad_ref(self)[0];
                         });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Tensor<T> out(detail::matrix_shape<T>(rows, cols));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(pv.row_span(r).begin(), pv.row_span(r).end(),
                out.row_span(r).begin() + static_cast<std::ptrdiff_t>(off));
    off += pv.cols();
  }
  auto ids = detail::ids_of(parts);
  return parts.front().tape().record(
      "concat_cols", std::move(out), parts,
      [ids, offsets, rows](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad_ref(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.needs_grad(ids[k])) continue;
          auto& gp = t.grad_ref(ids[k]);
          const std::size_t pc = gp.cols();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < pc; ++c) gp(r, c) += g(r, offsets[k] + c);
        }
      });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  return concat_cols(std::span<const Var<T>>(parts));
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Tensor<T> out(detail::matrix_shape<T>(rows, cols));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().values().begin(), p.value().values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  auto ids = detail::ids_of(parts);
  return parts.front().tape().record(
      "concat_rows", std::move(out), parts,
      [ids, offsets](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad_ref(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.needs_grad(ids[k])) continue;
          auto& gp = t.grad_ref(ids[k]);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
        }
      });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  return concat_rows(std::span<const Var<T>>(parts));
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t count) {
  const auto& av = a.value();
  if (count == 0 || begin + count > av.rows())
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", +" +
                     std::to_string(count) + ") of " + shape_string(av.shape()));
  const std::size_t cols = av.cols();
  Tensor<T> out(detail::matrix_shape<T>(count, cols));
  std::copy_n(av.data() + begin * cols, count * cols, out.data());
  const std::size_t ia = a.id();
  return a.tape().record("slice_rows", std::move(out), {a},
                         [ia, begin, cols](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad_ref(self);
                           auto& ga = t.grad_ref(ia);
                           for (std::size_t i = 0; i < g.size(); ++i)
                             ga[begin * cols + i] += g[i];
                         });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t begin, std::size_t count) {
  const auto& av = a.value();
  if (count == 0 || begin + count > av.cols())
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", +" +
                     std::to_string(count) + ") of " + shape_string(av.shape()));
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor<T> out(detail::matrix_shape<T>(rows, count));
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(av.data() + r * cols + begin, count, out.data() + r * count);
  const std::size_t ia = a.id();
  return a.tape().record("slice_cols", std::move(out), {a},
                         [ia, begin, count, rows, cols](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad_ref(self);
                           auto& ga = t.grad_ref(ia);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < count; ++c)
                               ga[r * cols + begin + c] += g[r * count + c];
                         });
}

/// Rows of `a` selected by index (also serves as embedding lookup).
template <typename T>
Var<T> gather_rows(const Var<T>& a, std::span<const int> ids) {
  const auto& av = a.value();
  if (ids.empty()) throw ShapeError("gather_rows: no indices");
  const std::size_t cols = av.cols();
  Tensor<T> out(detail::matrix_shape<T>(ids.size(), cols));
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= av.rows())
      throw ShapeError("gather_rows: index " + std::to_string(ids[r]) +
                       " out of range " + std::to_string(av.rows()));
    std::copy_n(av.data() + static_cast<std::size_t>(ids[r]) * cols, cols,
                out.data() + r * cols);
  }
  const std::size_t ia = a.id();
  std::vector<int> idx(ids.begin(), ids.end());
  return a.tape().record("gather_rows", std::move(out), {a},
                         [ia, idx, cols](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad_ref(self);
                           auto& ga = t.grad_ref(ia);
                           for (std::size_t r = 0; r < idx.size(); ++r)
                             for (std::size_t c = 0; c < cols; ++c)
                               ga[static_cast<std::size_t>(idx[r]) * cols + c] +=
                                   g[r * cols + c];
                         });
}

/// Per-row normalization to zero mean / unit variance, then gain and bias.
template <typename T>
Var<T> layer_norm_rows(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                       T eps = T(1e-5)) {
  const auto& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gain.value().size() != cols || bias.value().size() != cols)
    throw ShapeError("layer_norm: gain/bias width mismatch");
  Tensor<T> xhat(xv.shape());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T mean = T(0);
    for (std::size_t c = 0; c < cols; ++c) mean += xv(r, c);
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      T d = xv(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
  }
  Tensor<T> out(xv.shape());
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = xhat(r, c) * gv[c] + bv[c];
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(
      "layer_norm", std::move(out), {x, gain, bias},
      [ix, ig, ib, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape<T>& t, std::size_t self) {
        const auto& g = t.grad_ref(self);
        const auto& gv = t.value(ig);
        if (t.needs_grad(ig)) {
          auto& gg = t.grad_ref(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += g(r, c) * xhat(r, c);
        }
        if (t.needs_grad(ib)) {
          auto& gb = t.grad_ref(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
        }
        if (t.needs_grad(ix)) {
          auto& gx = t.grad_ref(ix);
          const T n = static_cast<T>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            T sum_dy = T(0), sum_dy_xhat = T(0);
            for (std::size_t c = 0; c < cols; ++c) {
              T dy = g(r, c) * gv[c];
              sum_dy += dy;
              sum_dy_xhat += dy * xhat(r, c);
            }
            for (std::size_t c = 0; c < cols; ++c) {
              T dy = g(r, c) * gv[c];
              gx(r, c) += inv_std[r] * (dy - sum_dy / n - xhat(r, c) * sum_dy_xhat / n);
            }
          }
        }
      });
}

/// Inverted dropout: identity when !train, otherwise zeroes each element with
/// probability `rate` and rescales survivors by 1/(1-rate).
template <typename T>
Var<T> dropout(const Var<T>& x, T rate, bool train, Rng* rng) {
  if (!train || rate <= T(0)) return x;
  if (rate >= T(1)) throw std::invalid_argument("dropout rate must be < 1");
  if (!rng) throw std::invalid_argument("dropout in train mode needs an Rng");
  const T keep = T(1) - rate;
  Tensor<T> mask(x.value().shape());
  for (auto& m : mask.values()) m = rng->bernoulli(static_cast<double>(keep)) ? T(1) / keep : T(0);
  Var<T> m = x.tape().constant(std::move(mask));
  return mul(x, m);
}

/// Sinusoidal position table: row p depends only on p.
template <typename T>
Tensor<T> sinusoid_positions(std::size_t count, std::size_t width) {
  Tensor<T> table(Shape{count, width});
  for (std::size_t p = 0; p < count; ++p)
    for (std::size_t i = 0; i < width; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(p) * rate;
      table(p, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return table;
}

}  // namespace np2mt
