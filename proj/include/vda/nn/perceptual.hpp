#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vda/ad/conv.hpp"
#include "vda/core/rng.hpp"

namespace vda {

/// Fixed multi-scale feature distance. Four random (but seeded, never
/// trained) conv layers with tanh nonlinearities; at each scale the channel
/// vectors are unit-normalized before the squared difference, so the score
/// reflects structure rather than amplitude. Random filters are enough to
/// expose edge and texture mismatch at this image scale.
template <typename T>
class PerceptualNet {
 public:
  explicit PerceptualNet(uint64_t seed = 0x9e3779b9, int64_t in_ch = 1) {
    Rng rng(seed);
    int64_t ci = in_ch;
    for (int64_t co : {8, 16, 24, 32}) {
      kernels_.push_back(Tensor<T>::randn({co, ci, 3, 3}, rng, T(std::sqrt(2.0 / double(ci * 9)))));
      ci = co;
    }
  }

  /// Symmetric, nonnegative, zero iff layer features agree (in particular 0
  /// for a == b). Differentiable w.r.t. both arguments.
  Var<T> distance(const Var<T>& a, const Var<T>& b) const {
    if (!a.val().same_shape(b.val()))
      throw ShapeError("perceptual: shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    Var<T> fa = a, fb = b;
    Var<T> total;
    for (size_t l = 0; l < kernels_.size(); ++l) {
      Var<T> k(kernels_[l]);  // constant: no gradient ever flows into it
      fa = tanh(conv2d(fa, k, 1));
      fb = tanh(conv2d(fb, k, 1));
      Var<T> d = mean(square(sub(unit_normalize(fa), unit_normalize(fb))));
      total = total.defined() ? add(total, d) : d;
      if (l + 1 < kernels_.size() && fa.shape()[2] >= 2 && fa.shape()[3] >= 2) {
        fa = avgpool2x(fa);
        fb = avgpool2x(fb);
      }
    }
    return total;
  }

 private:
  static Var<T> unit_normalize(const Var<T>& f) {
    const Shape& s = f.shape();
    Var<T> nsq = sum_to(square(f), {s[0], 1, s[2], s[3]});
    return mul(f, pow_scalar(add_scalar(nsq, 1e-8), -0.5));
  }

  std::vector<Tensor<T>> kernels_;
};

}  // namespace vda
