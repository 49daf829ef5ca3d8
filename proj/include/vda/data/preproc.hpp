#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vda/core/errors.hpp"
#include "vda/core/tensor.hpp"

namespace vda {

/// Zero-mean, unit-variance (population) rescaling of the whole array.
template <typename T>
Tensor<T> standardize(const Tensor<T>& x) {
  int64_t n = x.numel();
  if (n == 0) throw DegenerateInput("standardize: empty input");
  double mean = 0;
  for (int64_t i = 0; i < n; ++i) mean += x[i];
  mean /= double(n);
  double var = 0;
  for (int64_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= double(n);
  if (var <= 0) throw DegenerateInput("standardize: constant input");
  double inv = 1.0 / std::sqrt(var);
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < n; ++i) out[i] = T((x[i] - mean) * inv);
  return out;
}

/// Bilinear resampling of a 2-D slice from (sy, sx) to (ty, tx) mm spacing.
/// Pixel centres align at the shared physical origin; the output extent
/// matches the input extent to within one voxel.
template <typename T>
Tensor<T> resample(const Tensor<T>& img, double sy, double sx, double ty, double tx) {
  if (sy <= 0 || sx <= 0 || ty <= 0 || tx <= 0)
    throw ConfigError("resample: spacings must be positive");
  const Shape& s = img.shape();
  if (s.size() != 2) throw ShapeError("resample: expected 2-d slice, got " + shape_str(s));
  int64_t H = s[0], W = s[1];
  int64_t Ho = std::max<int64_t>(1, llround(double(H) * sy / ty));
  int64_t Wo = std::max<int64_t>(1, llround(double(W) * sx / tx));
  if (Ho == H && Wo == W && sy == ty && sx == tx) return img;

  Tensor<T> out({Ho, Wo});
  double ry = ty / sy, rx = tx / sx;
  for (int64_t y = 0; y < Ho; ++y) {
    double cy = (double(y) + 0.5) * ry - 0.5;
    int64_t y0 = int64_t(std::floor(cy));
    double fy = cy - double(y0);
    int64_t ya = std::clamp<int64_t>(y0, 0, H - 1);
    int64_t yb = std::clamp<int64_t>(y0 + 1, 0, H - 1);
    for (int64_t x = 0; x < Wo; ++x) {
      double cx = (double(x) + 0.5) * rx - 0.5;
      int64_t x0 = int64_t(std::floor(cx));
      double fx = cx - double(x0);
      int64_t xa = std::clamp<int64_t>(x0, 0, W - 1);
      int64_t xb = std::clamp<int64_t>(x0 + 1, 0, W - 1);
      double top = (1 - fx) * img[ya * W + xa] + fx * img[ya * W + xb];
      double bot = (1 - fx) * img[yb * W + xa] + fx * img[yb * W + xb];
      out[y * Wo + x] = T((1 - fy) * top + fy * bot);
    }
  }
  return out;
}

/// Linear-interpolation percentile on a sorted copy (rank p/100 * (n-1)).
template <typename T>
double percentile(const Tensor<T>& x, double pct) {
  if (x.numel() == 0) throw DegenerateInput("percentile: empty input");
  std::vector<T> sorted(x.data(), x.data() + x.numel());
  std::sort(sorted.begin(), sorted.end());
  double rank = pct / 100.0 * double(sorted.size() - 1);
  int64_t lo = int64_t(std::floor(rank));
  int64_t hi = std::min<int64_t>(lo + 1, int64_t(sorted.size()) - 1);
  double frac = rank - double(lo);
  return (1 - frac) * double(sorted[lo]) + frac * double(sorted[hi]);
}

/// Clips to the [lo_pct, hi_pct] percentiles and maps that window affinely
/// onto [-1, +1]. A collapsed window yields all zeros and sets *degenerate.
template <typename T>
Tensor<T> clip_normalize(const Tensor<T>& x, double lo_pct = 0.5, double hi_pct = 99.5,
                         bool* degenerate = nullptr) {
  if (!(lo_pct >= 0 && lo_pct < hi_pct && hi_pct <= 100))
    throw ConfigError("clip_normalize: need 0 <= lo < hi <= 100");
  if (degenerate) *degenerate = false;
  double lo = percentile(x, lo_pct);
  double hi = percentile(x, hi_pct);
  Tensor<T> out(x.shape());
  if (hi <= lo) {
    if (degenerate) *degenerate = true;
    out.fill(T(0));
    return out;
  }
  double scale = 2.0 / (hi - lo);
  for (int64_t i = 0, n = x.numel(); i < n; ++i) {
    double v = std::clamp(double(x[i]), lo, hi);
    out[i] = T((v - lo) * scale - 1.0);
  }
  return out;
}

/// Symmetric pad (with `fill`) and centre crop to an exact size x size frame.
/// Uneven margins put the extra row/column at the bottom/right when padding
/// and drop from the top/left first when cropping.
template <typename T>
Tensor<T> pad_crop(const Tensor<T>& img, int64_t size, T fill = T(-1)) {
  if (size <= 0) throw ConfigError("pad_crop: size must be positive");
  const Shape& s = img.shape();
  if (s.size() != 2) throw ShapeError("pad_crop: expected 2-d slice");
  int64_t H = s[0], W = s[1];
  if (H == size && W == size) return img;

  Tensor<T> out = Tensor<T>::full({size, size}, fill);
  // Source window and destination offset per axis.
  int64_t sy = H > size ? (H - size) / 2 : 0;
  int64_t sx = W > size ? (W - size) / 2 : 0;
  int64_t dy = H < size ? (size - H) / 2 : 0;
  int64_t dx = W < size ? (size - W) / 2 : 0;
  int64_t ch = std::min(H, size), cw = std::min(W, size);
  for (int64_t y = 0; y < ch; ++y)
    for (int64_t x = 0; x < cw; ++x) out[(dy + y) * size + dx + x] = img[(sy + y) * W + sx + x];
  return out;
}

/// Merges binary masks into {0 background, 1 brain, 2 vessel}; vessels win
/// where the masks overlap.
inline Tensor<uint8_t> combine_masks(const Tensor<uint8_t>& brain, const Tensor<uint8_t>& vessel) {
  if (!brain.same_shape(vessel)) throw ShapeError("combine_masks: shape mismatch");
  Tensor<uint8_t> out(brain.shape());
  for (int64_t i = 0, n = out.numel(); i < n; ++i)
    out[i] = vessel[i] ? 2 : (brain[i] ? 1 : 0);
  return out;
}

/// {0,1,2} label image to a 3-channel indicator stack (3, H, W).
template <typename T = float>
Tensor<T> one_hot(const Tensor<uint8_t>& labels) {
  const Shape& s = labels.shape();
  if (s.size() != 2) throw ShapeError("one_hot: expected 2-d label image");
  int64_t n = labels.numel();
  Tensor<T> out = Tensor<T>::zeros({3, s[0], s[1]});
  for (int64_t i = 0; i < n; ++i) {
    uint8_t v = labels[i];
    if (v > 2) throw InvalidLabel("one_hot: label " + std::to_string(int(v)) + " out of range");
    out[int64_t(v) * n + i] = T(1);
  }
  return out;
}

/// Per-pixel argmax over the channel axis of (C, H, W); ties resolve to the
/// lowest class index.
template <typename T>
Tensor<uint8_t> argmax_channels_hw(const Tensor<T>& probs) {
  const Shape& s = probs.shape();
  if (s.size() != 3) throw ShapeError("argmax_channels_hw: expected (C,H,W)");
  int64_t C = s[0], n = s[1] * s[2];
  Tensor<uint8_t> out({s[1], s[2]});
  for (int64_t i = 0; i < n; ++i) {
    int best = 0;
    T bv = probs[i];
    for (int c = 1; c < C; ++c) {
      T v = probs[c * n + i];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out[i] = uint8_t(best);
  }
  return out;
}

}  // namespace vda
