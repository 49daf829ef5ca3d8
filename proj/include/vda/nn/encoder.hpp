#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vda/data/phantom.hpp"
#include "vda/nn/generator.hpp"

namespace vda {

template <typename T>
struct EncoderOutput {
  Var<T> wplus;                        // (N, L, d_w)
  std::map<int64_t, Var<T>> injected;  // res -> feature map matching generator widths
};

/// Conditional inversion network. The domain label rides along as a constant
/// extra input channel (-1 source / +1 target); the backbone is the same
/// residual downsampling stack as the critic, with two heads: the W+ code and
/// fine-detail feature maps spliced back into synthesis through learned gates.
template <typename T>
class Encoder {
 public:
  explicit Encoder(const GenConfig& cfg = {}, uint64_t param_seed = 3)
      : cfg_(cfg), store_(param_seed) {
    cfg_.validate();
    int64_t levels = 0;
    for (int64_t res = 8; res <= cfg_.image_size; res *= 2) ++levels;
    num_rows_ = 1 + 2 * levels;
    inject_res_ = {cfg_.image_size / 2, cfg_.image_size};

    int64_t ch_top = width_at(cfg_.widths, cfg_.image_size);
    stem_ = EqConv2d<T>(store_, "e.stem", 2, ch_top, 3, 1.0, std::sqrt(2.0));

    for (int64_t res = cfg_.image_size; res > 4; res /= 2) {
      Block b;
      b.res = res;
      int64_t ch = width_at(cfg_.widths, res);
      int64_t ch_down = width_at(cfg_.widths, res / 2);
      std::string base = "e.b" + std::to_string(res);
      b.conv0 = EqConv2d<T>(store_, base + ".conv0", ch, ch, 3, 1.0, std::sqrt(2.0));
      b.conv1 = EqConv2d<T>(store_, base + ".conv1", ch, ch_down, 3, 1.0, std::sqrt(2.0));
      b.skip = EqConv2d<T>(store_, base + ".skip", ch, ch_down, 1, 1.0, 1.0, false);
      blocks_.push_back(b);
    }

    int64_t ch4 = width_at(cfg_.widths, 4);
    head_fc0_ = EqLinear<T>(store_, "e.head.fc0", ch4, 2 * cfg_.d_w, 1.0, std::sqrt(2.0));
    head_fc1_ = EqLinear<T>(store_, "e.head.fc1", 2 * cfg_.d_w, num_rows_ * cfg_.d_w, 1.0, 1.0);
    w_base_ = store_.add("e.head.w_base", Tensor<T>::zeros({num_rows_, cfg_.d_w}));

    for (int64_t res : inject_res_) {
      int64_t ch = width_at(cfg_.widths, res);
      std::string base = "e.inj" + std::to_string(res);
      inj_head_[res] = EqConv2d<T>(store_, base + ".head", ch, ch, 1, 1.0, 1.0);
      inj_gate_[res] = EqConv2d<T>(store_, base + ".gate", 2 * ch, ch, 1, 1.0, 1.0);
    }
  }

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  int64_t num_style_rows() const { return num_rows_; }

  EncoderOutput<T> encode(const Var<T>& img, Domain label) const {
    const Shape& s = img.shape();
    if (s.size() != 4 || s[1] != 1 || s[2] != cfg_.image_size || s[3] != cfg_.image_size)
      throw ShapeError("encode: expected (N,1," + std::to_string(cfg_.image_size) + "," +
                       std::to_string(cfg_.image_size) + "), got " + shape_str(s));
    int64_t N = s[0];

    T lab = label == Domain::source ? T(-1) : T(1);
    Var<T> lab_plane(Tensor<T>::full({N, 1, s[2], s[3]}, lab));
    Var<T> x = detail::lrelu(stem_(concat(std::vector<Var<T>>{img, lab_plane}, 1)));

    EncoderOutput<T> out;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (const auto& b : blocks_) {
      if (inj_head_.count(b.res))
        out.injected[b.res] = inj_head_.at(b.res)(x);
      Var<T> h = detail::lrelu(b.conv0(x));
      h = downsample2x(detail::lrelu(b.conv1(h)));
      Var<T> sk = downsample2x(b.skip(x));
      x = mul_scalar(add(h, sk), inv_sqrt2);
    }

    Var<T> pooled = reshape(mean_to(x, {N, x.shape()[1], 1, 1}), {N, x.shape()[1]});
    Var<T> h = detail::lrelu(head_fc0_(pooled));
    Var<T> w = reshape(head_fc1_(h), {N, num_rows_, cfg_.d_w});
    out.wplus = add(w, reshape(w_base_, {1, num_rows_, cfg_.d_w}));
    return out;
  }

  /// Synthesis-side blend: f <- f + gate * (injected - f), gate in (0,1)
  /// computed from both feature sets. Returned object plugs straight into
  /// Generator::synthesize.
  InjectionHooks<T> make_hooks(const EncoderOutput<T>& eo) const {
    return [this, eo](int64_t res, const Var<T>& feat) -> Var<T> {
      auto it = eo.injected.find(res);
      if (it == eo.injected.end()) return feat;
      Var<T> inj = it->second;
      if (!inj.val().same_shape(feat.val()))
        throw ShapeError("injection: encoder feature " + shape_str(inj.shape()) +
                         " vs synthesis " + shape_str(feat.shape()));
      Var<T> gate = sigmoid(inj_gate_.at(res)(concat(std::vector<Var<T>>{feat, inj}, 1)));
      return add(feat, mul(gate, sub(inj, feat)));
    };
  }

 private:
  struct Block {
    int64_t res;
    EqConv2d<T> conv0, conv1, skip;
  };

  GenConfig cfg_;
  ParamStore<T> store_;
  int64_t num_rows_ = 0;
  std::vector<int64_t> inject_res_;
  EqConv2d<T> stem_;
  std::vector<Block> blocks_;
  EqLinear<T> head_fc0_, head_fc1_;
  Var<T> w_base_;
  std::map<int64_t, EqConv2d<T>> inj_head_, inj_gate_;
};

}  // namespace vda
