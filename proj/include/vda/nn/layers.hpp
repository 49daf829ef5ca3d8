#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vda/ad/conv.hpp"
#include "vda/ad/ops.hpp"
#include "vda/core/rng.hpp"

namespace vda {

/// Named parameter registry for one network. Layers allocate their weights
/// here; optimizers and checkpoints address them by name.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(uint64_t init_seed = 0) : rng_(init_seed) {}

  Var<T> add(const std::string& name, Tensor<T> init) {
    Var<T> v(std::move(init), true);
    items_.push_back({name, v});
    return v;
  }
  Var<T> add_randn(const std::string& name, const Shape& shape, double stddev = 1.0) {
    return add(name, Tensor<T>::randn(shape, rng_, T(stddev)));
  }

  std::vector<std::pair<std::string, Var<T>>>& items() { return items_; }
  const std::vector<std::pair<std::string, Var<T>>>& items() const { return items_; }

  std::vector<Var<T>> vars() const {
    std::vector<Var<T>> out;
    out.reserve(items_.size());
    for (const auto& [_, v] : items_) out.push_back(v);
    return out;
  }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& [_, v] : items_) n += v.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [_, v] : items_) v.zero_grad();
  }
  void set_requires_grad(bool rg) {
    for (auto& [_, v] : items_) v.set_requires_grad(rg);
  }

  /// FNV-1a over names and shapes; two stores agree iff the architectures do.
  uint64_t arch_hash() const {
    uint64_t h = 1469598103934665603ull;
    auto eat = [&h](const void* p, size_t n) {
      const unsigned char* b = static_cast<const unsigned char*>(p);
      for (size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ull;
    };
    for (const auto& [name, v] : items_) {
      eat(name.data(), name.size());
      for (int64_t d : v.shape()) eat(&d, sizeof d);
    }
    return h;
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> items_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Equalized-learning-rate layers. Weights are stored as unit-variance draws
// and the 1/sqrt(fan_in) factor is applied at run time — as an output scale,
// so the raw leaf tensor is what the convolution records. Freezing the leaf
// then short-circuits its kernel-gradient computation entirely.

template <typename T>
struct EqLinear {
  Var<T> weight;  // (in, out), pre-transposed for direct matmul
  Var<T> bias;
  double scale, lr_mul;

  EqLinear() = default;
  EqLinear(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out,
           double lr_mul_ = 1.0, double gain = 1.0, double bias_init = 0.0)
      : scale(gain / std::sqrt(double(in)) * lr_mul_), lr_mul(lr_mul_) {
    weight = ps.add_randn(name + ".w", {in, out}, 1.0 / lr_mul_);
    bias = ps.add(name + ".b", Tensor<T>::full({out}, T(bias_init / lr_mul_)));
  }

  Var<T> operator()(const Var<T>& x) const {
    if (x.shape().size() != 2 || x.shape()[1] != weight.shape()[0])
      throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                       shape_str(weight.shape()));
    Var<T> y = mul_scalar(matmul(x, weight), scale);
    return add(y, reshape(mul_scalar(bias, lr_mul), {1, weight.shape()[1]}));
  }
};

template <typename T>
struct EqConv2d {
  Var<T> weight;  // (co, ci, k, k)
  Var<T> bias;    // undefined when bias is disabled
  int64_t pad;
  double scale, lr_mul;

  EqConv2d() = default;
  EqConv2d(ParamStore<T>& ps, const std::string& name, int64_t ci, int64_t co, int64_t k,
           double lr_mul_ = 1.0, double gain = 1.0, bool with_bias = true)
      : pad(k / 2), scale(gain / std::sqrt(double(ci * k * k)) * lr_mul_), lr_mul(lr_mul_) {
    weight = ps.add_randn(name + ".w", {co, ci, k, k}, 1.0 / lr_mul_);
    if (with_bias) bias = ps.add(name + ".b", Tensor<T>::zeros({co}));
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> y = mul_scalar(conv2d(x, weight, pad), scale);
    if (!bias.defined()) return y;
    return add(y, reshape(mul_scalar(bias, lr_mul), {1, weight.shape()[0], 1, 1}));
  }
};

/// Style-modulated convolution: scales input channels by a per-sample style,
/// convolves with the shared kernel, and normalizes each output channel by
/// the L2 norm the modulated kernel would have had.
template <typename T>
struct ModulatedConv {
  EqLinear<T> affine;  // style vector -> per-channel multipliers, bias at 1
  Var<T> weight;       // (co, ci, k, k)
  Var<T> bias;
  int64_t pad;
  double scale;
  bool demodulate;

  ModulatedConv() = default;
  ModulatedConv(ParamStore<T>& ps, const std::string& name, int64_t ci, int64_t co, int64_t k,
                int64_t d_w, bool demodulate_ = true)
      : pad(k / 2), scale(1.0 / std::sqrt(double(ci * k * k))), demodulate(demodulate_) {
    affine = EqLinear<T>(ps, name + ".aff", d_w, ci, 1.0, 1.0, 1.0);
    weight = ps.add_randn(name + ".w", {co, ci, k, k});
    bias = ps.add(name + ".b", Tensor<T>::zeros({co}));
  }

  Var<T> operator()(const Var<T>& x, const Var<T>& w_style) const {
    int64_t N = x.shape()[0], ci = weight.shape()[1], co = weight.shape()[0];
    Var<T> s = affine(w_style);  // (N, ci)
    Var<T> y = conv2d(mul(x, reshape(s, {N, ci, 1, 1})), weight, pad);
    y = mul_scalar(y, scale);
    if (demodulate) {
      int64_t k2 = weight.shape()[2] * weight.shape()[3];
      Var<T> wsq = reshape(sum_to(reshape(square(weight), {co * ci, k2}), {co * ci, 1}), {co, ci});
      // sum_ci s^2 * sum_k w^2, times the eqlr factor squared
      Var<T> d2 = mul_scalar(matmul(square(s), transpose2d(wsq)), scale * scale);
      Var<T> d = pow_scalar(add_scalar(d2, 1e-8), -0.5);
      y = mul(y, reshape(d, {N, co, 1, 1}));
    }
    return add(y, reshape(bias, {1, co, 1, 1}));
  }
};

/// z / sqrt(mean(z^2) + eps), per row.
template <typename T>
Var<T> pixel_norm(const Var<T>& z) {
  Var<T> ms = mean_to(square(z), {z.shape()[0], 1});
  return mul(z, pow_scalar(add_scalar(ms, 1e-8), -0.5));
}

/// Appends one channel holding the batch-wide mean per-feature standard
/// deviation — the classic stabilizer that lets the critic see sample
/// diversity.
template <typename T>
Var<T> minibatch_stddev(const Var<T>& x) {
  const Shape& s = x.shape();
  Var<T> m = mean_to(x, {1, s[1], s[2], s[3]});
  Var<T> v = mean_to(square(sub(x, m)), {1, s[1], s[2], s[3]});
  Var<T> sd = mean(pow_scalar(add_scalar(v, 1e-8), 0.5));
  Var<T> chan = broadcast_to(reshape(sd, {1, 1, 1, 1}), {s[0], 1, s[2], s[3]});
  return concat(std::vector<Var<T>>{x, chan}, 1);
}

/// Blur-then-halve, the downsampling used throughout the critic path.
template <typename T>
Var<T> downsample2x(const Var<T>& x) {
  return avgpool2x(blur3x3(x));
}

/// Resolution -> channel width table.
using WidthMap = std::map<int64_t, int64_t>;

inline int64_t width_at(const WidthMap& widths, int64_t res) {
  auto it = widths.find(res);
  if (it == widths.end()) throw ConfigError("no channel width for resolution " + std::to_string(res));
  return it->second;
}

inline WidthMap default_widths() { return {{4, 64}, {8, 48}, {16, 32}, {32, 16}, {64, 8}}; }

}  // namespace vda
