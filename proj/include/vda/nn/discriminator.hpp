#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vda/nn/generator.hpp"

namespace vda {

/// Residual critic mirroring the synthesis widths in reverse, with blur-pool
/// downsampling and a minibatch-stddev channel before the final head.
template <typename T>
class Discriminator {
 public:
  explicit Discriminator(const GenConfig& cfg = {}, uint64_t param_seed = 2)
      : cfg_(cfg), store_(param_seed) {
    cfg_.validate();
    int64_t ch_top = width_at(cfg_.widths, cfg_.image_size);
    from_rgb_ = EqConv2d<T>(store_, "d.from_rgb", 1, ch_top, 1, 1.0, std::sqrt(2.0));

    for (int64_t res = cfg_.image_size; res > 4; res /= 2) {
      Block b;
      b.res = res;
      int64_t ch = width_at(cfg_.widths, res);
      int64_t ch_down = width_at(cfg_.widths, res / 2);
      std::string base = "d.b" + std::to_string(res);
      b.conv0 = EqConv2d<T>(store_, base + ".conv0", ch, ch, 3, 1.0, std::sqrt(2.0));
      b.conv1 = EqConv2d<T>(store_, base + ".conv1", ch, ch_down, 3, 1.0, std::sqrt(2.0));
      b.skip = EqConv2d<T>(store_, base + ".skip", ch, ch_down, 1, 1.0, 1.0, false);
      blocks_.push_back(b);
    }

    int64_t ch4 = width_at(cfg_.widths, 4);
    conv_final_ = EqConv2d<T>(store_, "d.final.conv", ch4 + 1, ch4, 3, 1.0, std::sqrt(2.0));
    fc0_ = EqLinear<T>(store_, "d.final.fc0", ch4 * 16, ch4, 1.0, std::sqrt(2.0));
    fc1_ = EqLinear<T>(store_, "d.final.fc1", ch4, 1, 1.0, 1.0);
  }

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  /// Realness logit per image: (N, 1, H, W) -> (N).
  Var<T> operator()(const Var<T>& img) const {
    const Shape& s = img.shape();
    if (s.size() != 4 || s[1] != 1 || s[2] != cfg_.image_size || s[3] != cfg_.image_size)
      throw ShapeError("discriminator: expected (N,1," + std::to_string(cfg_.image_size) + "," +
                       std::to_string(cfg_.image_size) + "), got " + shape_str(s));
    int64_t N = s[0];

    Var<T> x = detail::lrelu(from_rgb_(img));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (const auto& b : blocks_) {
      Var<T> h = detail::lrelu(b.conv0(x));
      h = downsample2x(detail::lrelu(b.conv1(h)));
      Var<T> sk = downsample2x(b.skip(x));
      x = mul_scalar(add(h, sk), inv_sqrt2);
    }

    Var<T> y = detail::lrelu(conv_final_(minibatch_stddev(x)));
    y = reshape(y, {N, y.numel() / N});
    y = detail::lrelu(fc0_(y));
    return reshape(fc1_(y), {N});
  }

 private:
  struct Block {
    int64_t res;
    EqConv2d<T> conv0, conv1, skip;
  };

  GenConfig cfg_;
  ParamStore<T> store_;
  EqConv2d<T> from_rgb_;
  std::vector<Block> blocks_;
  EqConv2d<T> conv_final_;
  EqLinear<T> fc0_, fc1_;
};

}  // namespace vda
