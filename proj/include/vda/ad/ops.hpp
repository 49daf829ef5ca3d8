#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "vda/ad/var.hpp"
#include "vda/core/errors.hpp"

namespace vda {

// ---------------------------------------------------------------------------
// Broadcasting helpers (numpy rules, right-aligned).

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("broadcast mismatch: " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

namespace detail {

/// Row-major strides of `src` right-aligned against rank of `to`;
/// broadcast axes (src dim 1 against a larger dim) get stride 0.
inline std::vector<int64_t> aligned_strides(const Shape& src, const Shape& to) {
  std::vector<int64_t> st(to.size(), 0);
  int64_t stride = 1;
  for (int i = int(src.size()) - 1, j = int(to.size()) - 1; i >= 0; --i, --j) {
    if (src[i] == to[j])
      st[j] = src[i] == 1 ? 0 : stride;
    else if (src[i] == 1)
      st[j] = 0;
    else
      throw ShapeError("cannot align " + shape_str(src) + " to " + shape_str(to));
    stride *= src[i];
  }
  return st;
}

/// Walks every index of `shape` in row-major order, calling f(src_offset)
/// where src_offset follows `strides` (an odometer; no div/mod per element).
template <typename F>
void strided_scan(const Shape& shape, const std::vector<int64_t>& strides, F&& f) {
  int64_t n = shape_numel(shape);
  if (n == 0) return;
  size_t r = shape.size();
  std::vector<int64_t> idx(r, 0);
  int64_t off = 0;
  for (int64_t lin = 0;; ++lin) {
    f(off);
    if (lin + 1 == n) break;
    for (int a = int(r) - 1; a >= 0; --a) {
      off += strides[a];
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
      off -= strides[a] * shape[a];
    }
  }
}

template <typename T>
Tensor<T> broadcast_tensor(const Tensor<T>& x, const Shape& to) {
  if (x.shape() == to) return x;
  Tensor<T> out(to);
  auto st = aligned_strides(x.shape(), to);
  const T* src = x.data();
  T* dst = out.data();
  int64_t i = 0;
  strided_scan(to, st, [&](int64_t off) { dst[i++] = src[off]; });
  return out;
}

template <typename T>
Tensor<T> sum_to_tensor(const Tensor<T>& x, const Shape& to) {
  if (x.shape() == to) return x;
  Tensor<T> out = Tensor<T>::zeros(to);
  auto st = aligned_strides(to, x.shape());
  const T* src = x.data();
  T* dst = out.data();
  int64_t i = 0;
  strided_scan(x.shape(), st, [&](int64_t off) { dst[off] += src[i++]; });
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shape ops.

template <typename T>
Var<T> broadcast_to(const Var<T>& x, const Shape& to);

template <typename T>
Var<T> sum_to(const Var<T>& x, const Shape& to) {
  if (x.shape() == to) return x;
  Shape xs = x.shape();
  return Var<T>::make_op(detail::sum_to_tensor(x.val(), to), {x},
                         [xs](const Var<T>& g) { return std::vector<Var<T>>{broadcast_to(g, xs)}; });
}

template <typename T>
Var<T> broadcast_to(const Var<T>& x, const Shape& to) {
  if (x.shape() == to) return x;
  Shape xs = x.shape();
  return Var<T>::make_op(detail::broadcast_tensor(x.val(), to), {x},
                         [xs](const Var<T>& g) { return std::vector<Var<T>>{sum_to(g, xs)}; });
}

template <typename T>
Var<T> reshape(const Var<T>& x, const Shape& to) {
  Shape xs = x.shape();
  return Var<T>::make_op(x.val().reshaped(to), {x},
                         [xs](const Var<T>& g) { return std::vector<Var<T>>{reshape(g, xs)}; });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic (broadcasting).

namespace detail {

template <typename T, typename F>
Tensor<T> ew_binary(const Tensor<T>& a, const Tensor<T>& b, const Shape& os, F&& f) {
  Tensor<T> out(os);
  T* dst = out.data();
  if (a.shape() == os && b.shape() == os) {
    const T* pa = a.data();
    const T* pb = b.data();
    for (int64_t i = 0, n = out.numel(); i < n; ++i) dst[i] = f(pa[i], pb[i]);
    return out;
  }
  Tensor<T> ab = broadcast_tensor(a, os);
  Tensor<T> bb = broadcast_tensor(b, os);
  const T* pa = ab.data();
  const T* pb = bb.data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) dst[i] = f(pa[i], pb[i]);
  return out;
}

template <typename T, typename F>
Tensor<T> ew_unary(const Tensor<T>& x, F&& f) {
  Tensor<T> out(x.shape());
  const T* src = x.data();
  T* dst = out.data();
  for (int64_t i = 0, n = x.numel(); i < n; ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Shape os = broadcast_shape(a.shape(), b.shape());
  Shape as = a.shape(), bs = b.shape();
  return Var<T>::make_op(
      detail::ew_binary(a.val(), b.val(), os, [](T x, T y) { return x + y; }), {a, b},
      [as, bs](const Var<T>& g) {
        return std::vector<Var<T>>{sum_to(g, as), sum_to(g, bs)};
      });
}

namespace detail {
template <typename T>
Var<T> add_grads(const Var<T>& a, const Var<T>& b) {
  return add(a, b);
}
}  // namespace detail

template <typename T>
Var<T> neg(const Var<T>& x) {
  return Var<T>::make_op(detail::ew_unary(x.val(), [](T v) { return -v; }), {x},
                         [](const Var<T>& g) { return std::vector<Var<T>>{neg(g)}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Shape os = broadcast_shape(a.shape(), b.shape());
  Shape as = a.shape(), bs = b.shape();
  return Var<T>::make_op(
      detail::ew_binary(a.val(), b.val(), os, [](T x, T y) { return x - y; }), {a, b},
      [as, bs](const Var<T>& g) {
        return std::vector<Var<T>>{sum_to(g, as), sum_to(neg(g), bs)};
      });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Shape os = broadcast_shape(a.shape(), b.shape());
  Shape as = a.shape(), bs = b.shape();
  return Var<T>::make_op(
      detail::ew_binary(a.val(), b.val(), os, [](T x, T y) { return x * y; }), {a, b},
      [a, b, as, bs](const Var<T>& g) {
        return std::vector<Var<T>>{sum_to(mul(g, b), as), sum_to(mul(g, a), bs)};
      });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  Shape os = broadcast_shape(a.shape(), b.shape());
  Shape as = a.shape(), bs = b.shape();
  return Var<T>::make_op(
      detail::ew_binary(a.val(), b.val(), os, [](T x, T y) { return x / y; }), {a, b},
      [a, b, as, bs](const Var<T>& g) {
        return std::vector<Var<T>>{sum_to(div(g, b), as),
                                   sum_to(neg(div(mul(g, a), mul(b, b))), bs)};
      });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, double c) {
  return Var<T>::make_op(detail::ew_unary(x.val(), [c](T v) { return v + T(c); }), {x},
                         [](const Var<T>& g) { return std::vector<Var<T>>{g}; });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& x, double c) {
  return Var<T>::make_op(detail::ew_unary(x.val(), [c](T v) { return v * T(c); }), {x},
                         [c](const Var<T>& g) { return std::vector<Var<T>>{mul_scalar(g, c)}; });
}

template <typename T>
Var<T> pow_scalar(const Var<T>& x, double p) {
  return Var<T>::make_op(
      detail::ew_unary(x.val(), [p](T v) { return T(std::pow(double(v), p)); }), {x},
      [x, p](const Var<T>& g) {
        return std::vector<Var<T>>{mul_scalar(mul(g, pow_scalar(x, p - 1.0)), p)};
      });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return mul(x, x);
}

// ---------------------------------------------------------------------------
// Transcendental elementwise ops. Backward rules recompute the primal where
// needed so the gradient stays a function of the graph (double backward).

template <typename T>
Var<T> exp(const Var<T>& x) {
  return Var<T>::make_op(detail::ew_unary(x.val(), [](T v) { return std::exp(v); }), {x},
                         [x](const Var<T>& g) { return std::vector<Var<T>>{mul(g, exp(x))}; });
}

template <typename T>
Var<T> log(const Var<T>& x) {
  return Var<T>::make_op(detail::ew_unary(x.val(), [](T v) { return std::log(v); }), {x},
                         [x](const Var<T>& g) { return std::vector<Var<T>>{div(g, x)}; });
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
  return Var<T>::make_op(
      detail::ew_unary(x.val(), [](T v) { return std::sqrt(v); }), {x},
      [x](const Var<T>& g) {
        return std::vector<Var<T>>{div(mul_scalar(g, 0.5), sqrt(x))};
      });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return Var<T>::make_op(
      detail::ew_unary(x.val(), [](T v) { return std::tanh(v); }), {x},
      [x](const Var<T>& g) {
        Var<T> t = tanh(x);
        return std::vector<Var<T>>{mul(g, add_scalar(neg(mul(t, t)), 1.0))};
      });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  auto f = [](T v) {
    return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  };
  return Var<T>::make_op(detail::ew_unary(x.val(), f), {x}, [x](const Var<T>& g) {
    Var<T> s = sigmoid(x);
    return std::vector<Var<T>>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
  });
}

/// log(1 + exp(x)), evaluated stably for large |x|.
template <typename T>
Var<T> softplus(const Var<T>& x) {
  auto f = [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); };
  return Var<T>::make_op(detail::ew_unary(x.val(), f), {x}, [x](const Var<T>& g) {
    return std::vector<Var<T>>{mul(g, sigmoid(x))};
  });
}

/// Multiply by a fixed mask; the mask never receives gradient.
template <typename T>
Var<T> masked_scale(const Var<T>& x, const Tensor<T>& mask) {
  if (!x.val().same_shape(mask)) throw ShapeError("masked_scale: mask shape mismatch");
  Tensor<T> out(x.shape());
  const T* px = x.val().data();
  const T* pm = mask.data();
  T* dst = out.data();
  for (int64_t i = 0, n = out.numel(); i < n; ++i) dst[i] = px[i] * pm[i];
  return Var<T>::make_op(std::move(out), {x}, [mask](const Var<T>& g) {
    return std::vector<Var<T>>{masked_scale(g, mask)};
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope = 0.2) {
  Tensor<T> mask(x.shape());
  const T* px = x.val().data();
  T* pm = mask.data();
  for (int64_t i = 0, n = mask.numel(); i < n; ++i) pm[i] = px[i] >= T(0) ? T(1) : T(slope);
  return masked_scale(x, mask);
}

// ---------------------------------------------------------------------------
// Reductions.

template <typename T>
Var<T> sum(const Var<T>& x) {
  Shape xs = x.shape();
  const T* src = x.val().data();
  T acc = 0;
  for (int64_t i = 0, n = x.numel(); i < n; ++i) acc += src[i];
  return Var<T>::make_op(Tensor<T>::scalar(acc), {x}, [xs](const Var<T>& g) {
    return std::vector<Var<T>>{broadcast_to(g, xs)};
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return mul_scalar(sum(x), 1.0 / double(x.numel()));
}

/// Mean over the axes reduced by sum_to(x, to).
template <typename T>
Var<T> mean_to(const Var<T>& x, const Shape& to) {
  double k = double(shape_numel(to)) / double(x.numel());
  return mul_scalar(sum_to(x, to), k);
}

// ---------------------------------------------------------------------------
// Slicing / concatenation along one axis.

namespace detail {

inline void axis_extents(const Shape& s, int axis, int64_t& outer, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace detail

template <typename T>
Var<T> pad_axis(const Var<T>& x, int axis, int64_t start, int64_t total);

template <typename T>
Var<T> slice(const Var<T>& x, int axis, int64_t start, int64_t len) {
  const Shape& xs = x.shape();
  if (axis < 0 || axis >= int(xs.size()) || start < 0 || start + len > xs[axis])
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of axis " + std::to_string(axis) +
                     " of " + shape_str(xs));
  Shape os = xs;
  os[axis] = len;
  int64_t outer, inner;
  detail::axis_extents(xs, axis, outer, inner);
  Tensor<T> out(os);
  const T* src = x.val().data();
  T* dst = out.data();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(dst + o * len * inner, src + (o * xs[axis] + start) * inner,
                size_t(len * inner) * sizeof(T));
  int64_t total = xs[axis];
  return Var<T>::make_op(std::move(out), {x}, [axis, start, total](const Var<T>& g) {
    return std::vector<Var<T>>{pad_axis(g, axis, start, total)};
  });
}

/// Zero-embeds x along `axis` so the result has extent `total`, with x
/// occupying [start, start + extent). Adjoint of slice.
template <typename T>
Var<T> pad_axis(const Var<T>& x, int axis, int64_t start, int64_t total) {
  const Shape& xs = x.shape();
  int64_t len = xs[axis];
  if (start < 0 || start + len > total) throw ShapeError("pad_axis: range out of bounds");
  Shape os = xs;
  os[axis] = total;
  int64_t outer, inner;
  detail::axis_extents(xs, axis, outer, inner);
  Tensor<T> out = Tensor<T>::zeros(os);
  const T* src = x.val().data();
  T* dst = out.data();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(dst + (o * total + start) * inner, src + o * len * inner,
                size_t(len * inner) * sizeof(T));
  return Var<T>::make_op(std::move(out), {x}, [axis, start, len](const Var<T>& g) {
    return std::vector<Var<T>>{slice(g, axis, start, len)};
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  Shape os = xs[0].shape();
  int64_t total = 0;
  for (const auto& v : xs) {
    const Shape& s = v.shape();
    if (s.size() != os.size()) throw ShapeError("concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      if (int(i) != axis && s[i] != os[i]) throw ShapeError("concat: shape mismatch off-axis");
    total += s[axis];
  }
  os[axis] = total;
  int64_t outer, inner;
  detail::axis_extents(os, axis, outer, inner);
  Tensor<T> out(os);
  T* dst = out.data();
  std::vector<int64_t> starts(xs.size());
  int64_t pos = 0;
  for (size_t k = 0; k < xs.size(); ++k) {
    starts[k] = pos;
    int64_t len = xs[k].shape()[axis];
    const T* src = xs[k].val().data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(dst + (o * total + pos) * inner, src + o * len * inner,
                  size_t(len * inner) * sizeof(T));
    pos += len;
  }
  std::vector<int64_t> lens(xs.size());
  for (size_t k = 0; k < xs.size(); ++k) lens[k] = xs[k].shape()[axis];
  return Var<T>::make_op(std::move(out), xs, [axis, starts, lens](const Var<T>& g) {
    std::vector<Var<T>> gs;
    gs.reserve(starts.size());
    for (size_t k = 0; k < starts.size(); ++k) gs.push_back(slice(g, axis, starts[k], lens[k]));
    return gs;
  });
}

// ---------------------------------------------------------------------------
// 2-D linear algebra.

template <typename T>
Var<T> transpose2d(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 2) throw ShapeError("transpose2d: expected rank 2, got " + shape_str(s));
  Tensor<T> out({s[1], s[0]});
  const T* src = x.val().data();
  T* dst = out.data();
  for (int64_t i = 0; i < s[0]; ++i)
    for (int64_t j = 0; j < s[1]; ++j) dst[j * s[0] + i] = src[i * s[1] + j];
  return Var<T>::make_op(std::move(out), {x}, [](const Var<T>& g) {
    return std::vector<Var<T>>{transpose2d(g)};
  });
}

namespace detail {

template <typename T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Tensor<T> gemm(const Tensor<T>& a, const Tensor<T>& b) {
  int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> out({m, n});
  Eigen::Map<const EigenRowMat<T>> ma(a.data(), m, k);
  Eigen::Map<const EigenRowMat<T>> mb(b.data(), k, n);
  Eigen::Map<EigenRowMat<T>> mo(out.data(), m, n);
  mo.noalias() = ma * mb;
  return out;
}

}  // namespace detail

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(as) + " @ " + shape_str(bs));
  return Var<T>::make_op(detail::gemm(a.val(), b.val()), {a, b}, [a, b](const Var<T>& g) {
    return std::vector<Var<T>>{a.requires_grad() ? matmul(g, transpose2d(b)) : Var<T>(),
                               b.requires_grad() ? matmul(transpose2d(a), g) : Var<T>()};
  });
}

// ---------------------------------------------------------------------------
// Softmax family. The channel max is subtracted as a detached constant;
// softmax is exactly invariant to a per-location constant shift, so the
// stabiliser contributes no gradient.

namespace detail {

/// Per-location max over axis 1 of an (N, C, ...) tensor, keeping the axis.
template <typename T>
Tensor<T> channel_max(const Tensor<T>& x) {
  const Shape& s = x.shape();
  Shape os = s;
  os[1] = 1;
  int64_t outer = s[0], c = s[1], inner = 1;
  for (size_t i = 2; i < s.size(); ++i) inner *= s[i];
  Tensor<T> out(os);
  const T* src = x.data();
  T* dst = out.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T m = src[(o * c) * inner + i];
      for (int64_t k = 1; k < c; ++k) m = std::max(m, src[(o * c + k) * inner + i]);
      dst[o * inner + i] = m;
    }
  return out;
}

}  // namespace detail

template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
  Shape rs = x.shape();
  rs[1] = 1;
  Var<T> shifted = sub(x, Var<T>(detail::channel_max(x.val())));
  Var<T> e = exp(shifted);
  return div(e, sum_to(e, rs));
}

template <typename T>
Var<T> log_softmax_channels(const Var<T>& x) {
  Shape rs = x.shape();
  rs[1] = 1;
  Var<T> shifted = sub(x, Var<T>(detail::channel_max(x.val())));
  return sub(shifted, log(sum_to(exp(shifted), rs)));
}

}  // namespace vda
