#pragma once

#include <Eigen/Core>

#include <cstring>
#include <vector>

#include "vda/ad/ops.hpp"

namespace vda {

namespace detail {

/// Unrolls one padded sample into a (Ci*kh*kw, Ho*Wo) patch matrix.
/// Out-of-range rows are zero; in-range spans are copied in one memcpy each.
template <typename T>
void im2col(const T* x, int64_t Ci, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t pad,
            int64_t Ho, int64_t Wo, T* col) {
  for (int64_t ci = 0; ci < Ci; ++ci) {
    const T* plane = x + ci * H * W;
    for (int64_t u = 0; u < kh; ++u)
      for (int64_t v = 0; v < kw; ++v) {
        T* row = col + ((ci * kh + u) * kw + v) * Ho * Wo;
        int64_t x0 = std::max<int64_t>(0, pad - v);
        int64_t x1 = std::min<int64_t>(Wo, W + pad - v);
        for (int64_t y = 0; y < Ho; ++y) {
          int64_t iy = y + u - pad;
          T* dst = row + y * Wo;
          if (iy < 0 || iy >= H || x0 >= x1) {
            std::memset(dst, 0, size_t(Wo) * sizeof(T));
            continue;
          }
          if (x0 > 0) std::memset(dst, 0, size_t(x0) * sizeof(T));
          std::memcpy(dst + x0, plane + iy * W + (x0 + v - pad), size_t(x1 - x0) * sizeof(T));
          if (x1 < Wo) std::memset(dst + x1, 0, size_t(Wo - x1) * sizeof(T));
        }
      }
  }
}

}  // namespace detail

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, int64_t pad);

template <typename T>
Var<T> conv2d_wgrad(const Var<T>& x, const Var<T>& g, int64_t pad, int64_t kh, int64_t kw);

/// Swaps the two leading kernel axes and flips both spatial axes:
/// (A, B, kh, kw) -> (B, A, kh, kw) with out[b,a,u,v] = w[a,b,kh-1-u,kw-1-v].
/// conv2d with the transformed kernel computes the input gradient.
template <typename T>
Var<T> wft(const Var<T>& w) {
  const Shape& s = w.shape();
  if (s.size() != 4) throw ShapeError("wft: expected 4-d kernel, got " + shape_str(s));
  int64_t A = s[0], B = s[1], kh = s[2], kw = s[3];
  Tensor<T> out({B, A, kh, kw});
  const T* src = w.val().data();
  T* dst = out.data();
  for (int64_t a = 0; a < A; ++a)
    for (int64_t b = 0; b < B; ++b)
      for (int64_t u = 0; u < kh; ++u)
        for (int64_t v = 0; v < kw; ++v)
          dst[((b * A + a) * kh + u) * kw + v] =
              src[((a * B + b) * kh + (kh - 1 - u)) * kw + (kw - 1 - v)];
  return Var<T>::make_op(std::move(out), {w},
                         [](const Var<T>& g) { return std::vector<Var<T>>{wft(g)}; });
}

/// Stride-1 cross-correlation with zero padding.
/// x: (N, Ci, H, W), w: (Co, Ci, kh, kw) -> (N, Co, H+2p-kh+1, W+2p-kw+1).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, int64_t pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4)
    throw ShapeError("conv2d: expected 4-d input and kernel");
  if (xs[1] != ws[1])
    throw ShapeError("conv2d: channel mismatch " + shape_str(xs) + " vs " + shape_str(ws));
  int64_t N = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
  int64_t Co = ws[0], kh = ws[2], kw = ws[3];
  int64_t Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
  if (Ho < 1 || Wo < 1 || pad < 0 || pad > kh - 1 || pad > kw - 1)
    throw ShapeError("conv2d: bad geometry for " + shape_str(xs) + " kernel " + shape_str(ws) +
                     " pad " + std::to_string(pad));

  Tensor<T> out({N, Co, Ho, Wo});
  std::vector<T> col(size_t(Ci * kh * kw) * size_t(Ho * Wo));
  Eigen::Map<const detail::EigenRowMat<T>> wm(w.val().data(), Co, Ci * kh * kw);
  for (int64_t n = 0; n < N; ++n) {
    detail::im2col(x.val().data() + n * Ci * H * W, Ci, H, W, kh, kw, pad, Ho, Wo, col.data());
    Eigen::Map<const detail::EigenRowMat<T>> cm(col.data(), Ci * kh * kw, Ho * Wo);
    Eigen::Map<detail::EigenRowMat<T>> om(out.data() + n * Co * Ho * Wo, Co, Ho * Wo);
    om.noalias() = wm * cm;
  }
  // Each side's gradient is skipped when that parent does not require grad;
  // frozen-network passes then never pay for kernel gradients.
  return Var<T>::make_op(std::move(out), {x, w}, [x, w, pad, kh, kw](const Var<T>& g) {
    return std::vector<Var<T>>{
        x.requires_grad() ? conv2d(g, wft(w), kh - 1 - pad) : Var<T>(),
        w.requires_grad() ? conv2d_wgrad(x, g, pad, kh, kw) : Var<T>()};
  });
}

/// Kernel gradient of conv2d as a first-class op: correlates the input with
/// the output cotangent. x: (N, Ci, H, W), g: (N, Co, Ho, Wo) -> (Co, Ci, kh, kw).
template <typename T>
Var<T> conv2d_wgrad(const Var<T>& x, const Var<T>& g, int64_t pad, int64_t kh, int64_t kw) {
  const Shape& xs = x.shape();
  const Shape& gs = g.shape();
  int64_t N = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
  int64_t Co = gs[1], Ho = gs[2], Wo = gs[3];
  if (gs[0] != N || Ho != H + 2 * pad - kh + 1 || Wo != W + 2 * pad - kw + 1)
    throw ShapeError("conv2d_wgrad: inconsistent shapes " + shape_str(xs) + " / " +
                     shape_str(gs));

  Tensor<T> out = Tensor<T>::zeros({Co, Ci, kh, kw});
  std::vector<T> col(size_t(Ci * kh * kw) * size_t(Ho * Wo));
  Eigen::Map<detail::EigenRowMat<T>> om(out.data(), Co, Ci * kh * kw);
  for (int64_t n = 0; n < N; ++n) {
    detail::im2col(x.val().data() + n * Ci * H * W, Ci, H, W, kh, kw, pad, Ho, Wo, col.data());
    Eigen::Map<const detail::EigenRowMat<T>> cm(col.data(), Ci * kh * kw, Ho * Wo);
    Eigen::Map<const detail::EigenRowMat<T>> gm(g.val().data() + n * Co * Ho * Wo, Co, Ho * Wo);
    om.noalias() += gm * cm.transpose();
  }
  return Var<T>::make_op(std::move(out), {x, g}, [x, g, pad, kh, kw](const Var<T>& q) {
    return std::vector<Var<T>>{x.requires_grad() ? conv2d(g, wft(q), kh - 1 - pad) : Var<T>(),
                               g.requires_grad() ? conv2d(x, q, pad) : Var<T>()};
  });
}

// ---------------------------------------------------------------------------
// Fixed smoothing and resampling ops.

namespace detail {

/// Separable [1,2,1]/4 x [1,2,1]/4 smoothing of one H x W plane, zero padded.
template <typename T>
void blur_plane(const T* src, T* tmp, T* dst, int64_t H, int64_t W) {
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      T s = 2 * src[y * W + x];
      if (x > 0) s += src[y * W + x - 1];
      if (x + 1 < W) s += src[y * W + x + 1];
      tmp[y * W + x] = s * T(0.25);
    }
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      T s = 2 * tmp[y * W + x];
      if (y > 0) s += tmp[(y - 1) * W + x];
      if (y + 1 < H) s += tmp[(y + 1) * W + x];
      dst[y * W + x] = s * T(0.25);
    }
}

struct LerpTap {
  int64_t i0, i1;
  double w0, w1;
};

/// Half-pixel source taps for length L upsampled by `factor`, edges clamped.
inline std::vector<LerpTap> lerp_taps(int64_t L, int64_t factor) {
  std::vector<LerpTap> taps(size_t(L * factor));
  for (int64_t i = 0; i < L * factor; ++i) {
    double c = (double(i) + 0.5) / double(factor) - 0.5;
    int64_t i0 = int64_t(std::floor(c));
    double f = c - double(i0);
    taps[i].i0 = std::clamp<int64_t>(i0, 0, L - 1);
    taps[i].i1 = std::clamp<int64_t>(i0 + 1, 0, L - 1);
    taps[i].w0 = 1.0 - f;
    taps[i].w1 = f;
  }
  return taps;
}

}  // namespace detail

/// Depthwise binomial smoothing, same shape, zero boundary. Symmetric kernel
/// plus zero padding make the op self-adjoint.
template <typename T>
Var<T> blur3x3(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("blur3x3: expected 4-d input");
  int64_t planes = s[0] * s[1], H = s[2], W = s[3];
  Tensor<T> out(s);
  std::vector<T> tmp(size_t(H * W));
  for (int64_t p = 0; p < planes; ++p)
    detail::blur_plane(x.val().data() + p * H * W, tmp.data(), out.data() + p * H * W, H, W);
  return Var<T>::make_op(std::move(out), {x},
                         [](const Var<T>& g) { return std::vector<Var<T>>{blur3x3(g)}; });
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x);

/// Non-overlapping 2x2 block sum; spatial dims must be even.
template <typename T>
Var<T> sumpool2x(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[2] % 2 || s[3] % 2)
    throw ShapeError("sumpool2x: need even 4-d input, got " + shape_str(s));
  int64_t planes = s[0] * s[1], H = s[2], W = s[3], Ho = H / 2, Wo = W / 2;
  Tensor<T> out({s[0], s[1], Ho, Wo});
  const T* src = x.val().data();
  T* dst = out.data();
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t y = 0; y < Ho; ++y)
      for (int64_t xo = 0; xo < Wo; ++xo) {
        const T* base = src + p * H * W + 2 * y * W + 2 * xo;
        dst[(p * Ho + y) * Wo + xo] = base[0] + base[1] + base[W] + base[W + 1];
      }
  return Var<T>::make_op(std::move(out), {x}, [](const Var<T>& g) {
    return std::vector<Var<T>>{upsample_nearest2x(g)};
  });
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("upsample_nearest2x: expected 4-d input");
  int64_t planes = s[0] * s[1], H = s[2], W = s[3];
  Tensor<T> out({s[0], s[1], H * 2, W * 2});
  const T* src = x.val().data();
  T* dst = out.data();
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t xo = 0; xo < W; ++xo) {
        T v = src[(p * H + y) * W + xo];
        T* base = dst + p * 4 * H * W + 2 * y * 2 * W + 2 * xo;
        base[0] = base[1] = base[2 * W] = base[2 * W + 1] = v;
      }
  return Var<T>::make_op(std::move(out), {x},
                         [](const Var<T>& g) { return std::vector<Var<T>>{sumpool2x(g)}; });
}

template <typename T>
Var<T> avgpool2x(const Var<T>& x) {
  return mul_scalar(sumpool2x(x), 0.25);
}

template <typename T>
Var<T> bilinear_down_adjoint(const Var<T>& x, int64_t factor);

/// Bilinear upsampling by an integer factor with half-pixel alignment and
/// clamped edges; separable row/column passes.
template <typename T>
Var<T> bilinear_up(const Var<T>& x, int64_t factor) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("bilinear_up: expected 4-d input");
  if (factor < 1) throw ShapeError("bilinear_up: factor must be >= 1");
  if (factor == 1) return x;
  int64_t planes = s[0] * s[1], H = s[2], W = s[3], Ho = H * factor, Wo = W * factor;
  auto ty = detail::lerp_taps(H, factor);
  auto tx = detail::lerp_taps(W, factor);
  Tensor<T> out({s[0], s[1], Ho, Wo});
  std::vector<T> tmp(size_t(Ho * W));
  const T* src = x.val().data();
  T* dst = out.data();
  for (int64_t p = 0; p < planes; ++p) {
    const T* plane = src + p * H * W;
    for (int64_t y = 0; y < Ho; ++y)
      for (int64_t xc = 0; xc < W; ++xc)
        tmp[y * W + xc] =
            T(ty[y].w0) * plane[ty[y].i0 * W + xc] + T(ty[y].w1) * plane[ty[y].i1 * W + xc];
    T* oplane = dst + p * Ho * Wo;
    for (int64_t y = 0; y < Ho; ++y)
      for (int64_t xo = 0; xo < Wo; ++xo)
        oplane[y * Wo + xo] =
            T(tx[xo].w0) * tmp[y * W + tx[xo].i0] + T(tx[xo].w1) * tmp[y * W + tx[xo].i1];
  }
  return Var<T>::make_op(std::move(out), {x}, [factor](const Var<T>& g) {
    return std::vector<Var<T>>{bilinear_down_adjoint(g, factor)};
  });
}

/// Exact adjoint of bilinear_up: scatters each fine pixel back to its two
/// source taps per axis. (N,C,H*f,W*f) -> (N,C,H,W).
template <typename T>
Var<T> bilinear_down_adjoint(const Var<T>& x, int64_t factor) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("bilinear_down_adjoint: expected 4-d input");
  if (factor == 1) return x;
  if (s[2] % factor || s[3] % factor)
    throw ShapeError("bilinear_down_adjoint: dims not divisible by factor");
  int64_t planes = s[0] * s[1], Ho = s[2], Wo = s[3], H = Ho / factor, W = Wo / factor;
  auto ty = detail::lerp_taps(H, factor);
  auto tx = detail::lerp_taps(W, factor);
  Tensor<T> out = Tensor<T>::zeros({s[0], s[1], H, W});
  std::vector<T> tmp(size_t(Ho * W));
  const T* src = x.val().data();
  T* dst = out.data();
  for (int64_t p = 0; p < planes; ++p) {
    std::fill(tmp.begin(), tmp.end(), T(0));
    const T* iplane = src + p * Ho * Wo;
    for (int64_t y = 0; y < Ho; ++y)
      for (int64_t xo = 0; xo < Wo; ++xo) {
        T v = iplane[y * Wo + xo];
        tmp[y * W + tx[xo].i0] += T(tx[xo].w0) * v;
        tmp[y * W + tx[xo].i1] += T(tx[xo].w1) * v;
      }
    T* oplane = dst + p * H * W;
    for (int64_t y = 0; y < Ho; ++y)
      for (int64_t xc = 0; xc < W; ++xc) {
        T v = tmp[y * W + xc];
        oplane[ty[y].i0 * W + xc] += T(ty[y].w0) * v;
        oplane[ty[y].i1 * W + xc] += T(ty[y].w1) * v;
      }
  }
  return Var<T>::make_op(std::move(out), {x}, [factor](const Var<T>& g) {
    return std::vector<Var<T>>{bilinear_up(g, factor)};
  });
}

}  // namespace vda
