#pragma once

#include <gtest/gtest.h>

#include <functional>
#include <vector>

#include "vda/ad/ops.hpp"
#include "vda/core/rng.hpp"

namespace vda::testing {

/// Compares reverse-mode gradients of a scalar-valued function against
/// central finite differences over every element of every input.
inline void check_grad(
    const std::function<Var<double>(const std::vector<Var<double>>&)>& fn,
    std::vector<Tensor<double>> inputs, double eps = 1e-5, double tol = 1e-7) {
  std::vector<Var<double>> vars;
  vars.reserve(inputs.size());
  for (auto& t : inputs) vars.emplace_back(t.clone(), true);

  Var<double> out = fn(vars);
  ASSERT_EQ(out.numel(), 1) << "gradcheck target must be scalar";
  backward(out);

  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    GradModeGuard no_graph(false);
    std::vector<Var<double>> vs;
    vs.reserve(xs.size());
    for (const auto& t : xs) vs.emplace_back(t, false);
    return fn(vs).val()[0];
  };

  for (size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double>& g = vars[k].grad();
    ASSERT_TRUE(g.defined()) << "no gradient reached input " << k;
    for (int64_t i = 0; i < inputs[k].numel(); ++i) {
      double saved = inputs[k][i];
      inputs[k][i] = saved + eps;
      double fp = eval(inputs);
      inputs[k][i] = saved - eps;
      double fm = eval(inputs);
      inputs[k][i] = saved;
      double fd = (fp - fm) / (2 * eps);
      double ad = g[i];
      double denom = std::max({1.0, std::abs(fd), std::abs(ad)});
      EXPECT_NEAR(ad / denom, fd / denom, tol)
          << "input " << k << " element " << i << ": ad=" << ad << " fd=" << fd;
    }
  }
}

inline Tensor<double> random_tensor(const Shape& s, Rng& rng, double scale = 1.0) {
  return Tensor<double>::randn(s, rng, scale);
}

/// Random values bounded away from zero, for ops with a kink or pole there.
inline Tensor<double> random_offset_tensor(const Shape& s, Rng& rng, double lo = 0.5,
                                           double span = 1.5) {
  Tensor<double> t(s);
  for (int64_t i = 0; i < t.numel(); ++i) {
    double u = rng.uniform(lo, lo + span);
    t[i] = rng.bernoulli(0.5) ? u : -u;
  }
  return t;
}

/// Strictly positive random values for log/sqrt-style domains.
inline Tensor<double> random_positive_tensor(const Shape& s, Rng& rng, double lo = 0.5,
                                             double hi = 2.0) {
  Tensor<double> t(s);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace vda::testing
