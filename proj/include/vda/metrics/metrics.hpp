#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "vda/core/errors.hpp"
#include "vda/core/tensor.hpp"
#include "vda/metrics/skeleton.hpp"

namespace vda {

namespace detail {

template <typename U>
void require_same_shape(const Tensor<U>& a, const Tensor<U>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

struct OverlapCounts {
  int64_t p = 0, g = 0, both = 0;
};

template <typename U>
OverlapCounts overlap(const Tensor<U>& pred, const Tensor<U>& gt) {
  OverlapCounts c;
  for (int64_t i = 0, n = pred.numel(); i < n; ++i) {
    bool p = pred[i] != U(0), g = gt[i] != U(0);
    c.p += p;
    c.g += g;
    c.both += p && g;
  }
  return c;
}

}  // namespace detail

template <typename U>
double dice(const Tensor<U>& pred, const Tensor<U>& gt) {
  detail::require_same_shape(pred, gt, "dice");
  auto c = detail::overlap(pred, gt);
  if (c.p + c.g == 0) return 1.0;
  return 2.0 * double(c.both) / double(c.p + c.g);
}

/// `precision_flagged` / `recall_flagged` mark values fixed by the empty-mask
/// convention rather than computed from the ratio.
struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  bool precision_flagged = false;
  bool recall_flagged = false;
};

template <typename U>
PrecisionRecall precision_recall(const Tensor<U>& pred, const Tensor<U>& gt) {
  detail::require_same_shape(pred, gt, "precision_recall");
  auto c = detail::overlap(pred, gt);
  PrecisionRecall r;
  if (c.p == 0) {
    r.precision = c.g == 0 ? 1.0 : 0.0;
    r.precision_flagged = true;
  } else {
    r.precision = double(c.both) / double(c.p);
  }
  if (c.g == 0) {
    r.recall = c.p == 0 ? 1.0 : 0.0;
    r.recall_flagged = true;
  } else {
    r.recall = double(c.both) / double(c.g);
  }
  return r;
}

/// Harmonic mean of topology precision |skel(P)∩G|/|skel(P)| and topology
/// sensitivity |skel(G)∩P|/|skel(G)|. Identical masks score 1 (including the
/// all-empty pair); an empty skeleton zeroes its term.
template <typename U>
double cldice(const Tensor<U>& pred, const Tensor<U>& gt) {
  detail::require_same_shape(pred, gt, "cldice");
  bool equal = true;
  for (int64_t i = 0, n = pred.numel(); i < n && equal; ++i)
    equal = (pred[i] != U(0)) == (gt[i] != U(0));
  if (equal) return 1.0;

  Tensor<uint8_t> sp = skeletonize(pred);
  Tensor<uint8_t> sg = skeletonize(gt);
  int64_t np = 0, ng = 0, pg = 0, gp = 0;
  for (int64_t i = 0, n = pred.numel(); i < n; ++i) {
    if (sp[i]) {
      ++np;
      if (gt[i] != U(0)) ++pg;
    }
    if (sg[i]) {
      ++ng;
      if (pred[i] != U(0)) ++gp;
    }
  }
  double tprec = np ? double(pg) / double(np) : 0.0;
  double tsens = ng ? double(gp) / double(ng) : 0.0;
  if (tprec + tsens == 0.0) return 0.0;
  return 2.0 * tprec * tsens / (tprec + tsens);
}

/// Restricts a mask to a region of interest (logical and).
template <typename U>
Tensor<U> mask_within(const Tensor<U>& mask, const Tensor<U>& roi) {
  detail::require_same_shape(mask, roi, "mask_within");
  Tensor<U> out(mask.shape());
  for (int64_t i = 0, n = mask.numel(); i < n; ++i)
    out[i] = (mask[i] != U(0) && roi[i] != U(0)) ? U(1) : U(0);
  return out;
}

// ---------------------------------------------------------------------------
// Per-split aggregation.

struct SummaryStat {
  double mean = 0.0;
  double stddev = 0.0;  // population
  int64_t count = 0;
};

inline SummaryStat summarize(const std::vector<double>& values) {
  if (values.empty()) throw EmptyReport("summarize: no values");
  SummaryStat s;
  s.count = int64_t(values.size());
  for (double v : values) s.mean += v;
  s.mean /= double(values.size());
  double acc = 0;
  for (double v : values) acc += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(acc / double(values.size()));
  return s;
}

/// Fractions to table style: (0.704, 0.024) -> "70.4 ± 2.4".
inline std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f ± %.1f", mean * 100.0, stddev * 100.0);
  return buf;
}

inline std::string format_mean_std(const SummaryStat& s) {
  return format_mean_std(s.mean, s.stddev);
}

// ---------------------------------------------------------------------------
// Two-sample Kolmogorov–Smirnov distance: sup_x |F_a(x) - F_b(x)|.

inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw EmptyReport("ks_distance: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0;
  size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    // Apply every jump at the current value on both sides before comparing,
    // so ties move the two curves together.
    double x = i < a.size() && (j >= b.size() || a[i] <= b[j]) ? a[i] : b[j];
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    double fa = double(i) / double(a.size());
    double fb = double(j) / double(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace vda
