#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vda/nn/layers.hpp"

namespace vda {

struct GenConfig {
  int64_t image_size = 64;
  int64_t z_dim = 128;
  int64_t d_w = 128;
  int64_t map_layers = 8;
  double map_lr_mul = 0.01;
  WidthMap widths = default_widths();

  void validate() const {
    if (image_size < 8 || (image_size & (image_size - 1)))
      throw ConfigError("generator: image_size must be a power of two >= 8");
    if (z_dim < 1 || d_w < 1 || map_layers < 1) throw ConfigError("generator: bad latent dims");
  }
};

/// Optional per-resolution feature rewrite, used by the encoder to splice its
/// own fine-detail features into the synthesis stream.
template <typename T>
using InjectionHooks = std::function<Var<T>(int64_t res, const Var<T>& feat)>;

template <typename T>
struct SynthesisOut {
  Var<T> image;     // (N, 1, H, W), tanh-bounded
  Var<T> features;  // (N, F, H, W) concatenated per-layer maps; set on request
};

namespace detail {

template <typename T>
Var<T> lrelu(const Var<T>& x) {
  // sqrt(2) restores unit variance after the leak, keeping eqlr calibrated.
  return mul_scalar(leaky_relu(x, 0.2), std::sqrt(2.0));
}

}  // namespace detail

/// Style-based synthesis network: a learned 4x4 seed refined through
/// modulated convolutions, doubling resolution per block, with a skip-summed
/// single-channel output and per-layer noise that is off in eval mode.
template <typename T>
class Generator {
 public:
  explicit Generator(const GenConfig& cfg = {}, uint64_t param_seed = 1)
      : cfg_(cfg), store_(param_seed) {
    cfg_.validate();
    int64_t ch4 = width_at(cfg_.widths, 4);

    int64_t in = cfg_.z_dim;
    for (int64_t i = 0; i < cfg_.map_layers; ++i) {
      map_fc_.push_back(EqLinear<T>(store_, "map.fc" + std::to_string(i), in, cfg_.d_w,
                                    cfg_.map_lr_mul, std::sqrt(2.0)));
      in = cfg_.d_w;
    }

    const4_ = store_.add_randn("syn.const4", {1, ch4, 4, 4});
    conv4_ = ModulatedConv<T>(store_, "syn.b4.conv", ch4, ch4, 3, cfg_.d_w);
    noise4_ = store_.add("syn.b4.noise", Tensor<T>::zeros({1}));
    torgb4_ = ModulatedConv<T>(store_, "syn.b4.torgb", ch4, 1, 1, cfg_.d_w, false);

    int64_t prev = ch4;
    for (int64_t res = 8; res <= cfg_.image_size; res *= 2) {
      Block b;
      b.res = res;
      int64_t ch = width_at(cfg_.widths, res);
      std::string base = "syn.b" + std::to_string(res);
      b.conv0 = ModulatedConv<T>(store_, base + ".conv0", prev, ch, 3, cfg_.d_w);
      b.noise0 = store_.add(base + ".noise0", Tensor<T>::zeros({1}));
      b.conv1 = ModulatedConv<T>(store_, base + ".conv1", ch, ch, 3, cfg_.d_w);
      b.noise1 = store_.add(base + ".noise1", Tensor<T>::zeros({1}));
      b.torgb = ModulatedConv<T>(store_, base + ".torgb", ch, 1, 1, cfg_.d_w, false);
      blocks_.push_back(b);
      prev = ch;
    }

    int64_t fch = feature_channels();
    label_l0_ = EqConv2d<T>(store_, "label.l0", fch, 256, 1, 1.0, std::sqrt(2.0));
    label_l1_ = EqConv2d<T>(store_, "label.l1", 256, 128, 1, 1.0, std::sqrt(2.0));
    label_l2_ = EqConv2d<T>(store_, "label.l2", 128, 3, 1, 1.0, 1.0);
  }

  const GenConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  int64_t num_style_rows() const { return 1 + 2 * int64_t(blocks_.size()); }

  /// Total channel count of the concatenated feature stack.
  int64_t feature_channels() const {
    int64_t n = width_at(cfg_.widths, 4);
    for (const auto& b : blocks_) n += 2 * width_at(cfg_.widths, b.res);
    return n;
  }

  /// Parameters of the per-pixel label head only.
  std::vector<Var<T>> label_branch_vars() const {
    return vars_with_prefix("label.");
  }
  /// Everything that shapes images: mapping, seed, convolutions.
  std::vector<Var<T>> synthesis_vars() const {
    std::vector<Var<T>> out;
    for (const auto& [name, v] : store_.items())
      if (name.rfind("label.", 0) != 0) out.push_back(v);
    return out;
  }

  Var<T> map_latent(const Var<T>& z) const {
    if (z.shape().size() != 2 || z.shape()[1] != cfg_.z_dim)
      throw ShapeError("map_latent: expected (N," + std::to_string(cfg_.z_dim) + "), got " +
                       shape_str(z.shape()));
    Var<T> h = pixel_norm(z);
    for (const auto& fc : map_fc_) h = detail::lrelu(fc(h));
    return h;
  }

  /// Copies one w to every style row: the plain-W embedding into W+.
  Var<T> broadcast_w(const Var<T>& w) const {
    int64_t N = w.shape()[0];
    return broadcast_to(reshape(w, {N, 1, cfg_.d_w}), {N, num_style_rows(), cfg_.d_w});
  }

  SynthesisOut<T> synthesize(const Var<T>& wplus, const InjectionHooks<T>* hooks = nullptr,
                             Rng* noise_rng = nullptr, bool want_features = false) const {
    const Shape& s = wplus.shape();
    if (s.size() != 3 || s[1] != num_style_rows() || s[2] != cfg_.d_w)
      throw ShapeError("synthesize: wplus must be (N," + std::to_string(num_style_rows()) + "," +
                       std::to_string(cfg_.d_w) + "), got " + shape_str(s));
    int64_t N = s[0];

    auto style = [&](int64_t row) { return reshape(slice(wplus, 1, row, 1), {N, cfg_.d_w}); };
    std::vector<Var<T>> feats;

    Var<T> x = broadcast_to(const4_, {N, const4_.shape()[1], 4, 4});
    x = detail::lrelu(add_noise(conv4_(x, style(0)), noise4_, noise_rng));
    feats.push_back(x);
    Var<T> rgb = torgb4_(x, style(0));

    int64_t row = 0;
    for (const auto& b : blocks_) {
      x = bilinear_up(x, 2);
      x = detail::lrelu(add_noise(b.conv0(x, style(row + 1)), b.noise0, noise_rng));
      feats.push_back(x);
      x = detail::lrelu(add_noise(b.conv1(x, style(row + 2)), b.noise1, noise_rng));
      if (hooks && *hooks) x = (*hooks)(b.res, x);
      feats.push_back(x);
      rgb = add(bilinear_up(rgb, 2), b.torgb(x, style(row + 2)));
      row += 2;
    }

    SynthesisOut<T> out;
    out.image = tanh(rgb);
    if (want_features) {
      std::vector<Var<T>> up;
      up.reserve(feats.size());
      for (auto& f : feats) up.push_back(bilinear_up(f, cfg_.image_size / f.shape()[2]));
      out.features = concat(up, 1);
    }
    return out;
  }

  /// Pointwise three-layer class head over the feature stack.
  Var<T> label_logits(const Var<T>& features) const {
    if (features.shape().size() != 4 || features.shape()[1] != feature_channels())
      throw ShapeError("label_logits: expected " + std::to_string(feature_channels()) +
                       " channels, got " + shape_str(features.shape()));
    Var<T> h = detail::lrelu(label_l0_(features));
    h = detail::lrelu(label_l1_(h));
    return label_l2_(h);
  }

 private:
  struct Block {
    int64_t res;
    ModulatedConv<T> conv0, conv1, torgb;
    Var<T> noise0, noise1;
  };

  std::vector<Var<T>> vars_with_prefix(const std::string& prefix) const {
    std::vector<Var<T>> out;
    for (const auto& [name, v] : store_.items())
      if (name.rfind(prefix, 0) == 0) out.push_back(v);
    return out;
  }

  Var<T> add_noise(const Var<T>& x, const Var<T>& strength, Rng* rng) const {
    if (!rng) return x;
    const Shape& s = x.shape();
    Tensor<T> n = Tensor<T>::randn({s[0], 1, s[2], s[3]}, *rng);
    return add(x, mul(reshape(strength, {1, 1, 1, 1}), Var<T>(std::move(n))));
  }

  GenConfig cfg_;
  ParamStore<T> store_;
  std::vector<EqLinear<T>> map_fc_;
  Var<T> const4_;
  ModulatedConv<T> conv4_, torgb4_;
  Var<T> noise4_;
  std::vector<Block> blocks_;
  EqConv2d<T> label_l0_, label_l1_, label_l2_;
};

}  // namespace vda
