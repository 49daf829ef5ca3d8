#pragma once

#include <cstdint>

#include "vda/ad/ops.hpp"
#include "vda/nn/perceptual.hpp"

namespace vda {

template <typename T>
Var<T> mse_loss(const Var<T>& a, const Var<T>& b) {
  if (!a.val().same_shape(b.val()))
    throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  return mean(square(sub(a, b)));
}

/// Image-fidelity loss for reconstruction and cycle terms: weighted MSE plus
/// the fixed perceptual distance.
template <typename T>
Var<T> reconstruction_loss(const Var<T>& x, const Var<T>& xhat, double lambda_mse,
                           double lambda_perc, const PerceptualNet<T>* perc) {
  Var<T> l = mul_scalar(mse_loss(x, xhat), lambda_mse);
  if (perc && lambda_perc > 0) l = add(l, mul_scalar(perc->distance(x, xhat), lambda_perc));
  return l;
}

/// 1 - soft Dice of softmax probabilities against a one-hot target, averaged
/// over the classes present in the target (per sample) with additive
/// smoothing. Absent classes are left out of the average: their smoothed
/// score is an artifact of eps, not a statement about the prediction.
template <typename T>
Var<T> soft_dice_loss(const Var<T>& logits, const Var<T>& onehot, double eps = 1e-5) {
  const Shape& s = logits.shape();
  if (!logits.val().same_shape(onehot.val()) || s.size() != 4)
    throw ShapeError("dice: expected matching (N,C,H,W), got " + shape_str(s) + " vs " +
                     shape_str(onehot.shape()));
  int64_t NC = s[0] * s[1], HW = s[2] * s[3];
  Var<T> p = reshape(softmax_channels(logits), {NC, HW});
  Var<T> y = reshape(onehot, {NC, HW});
  Var<T> inter = sum_to(mul(p, y), {NC, 1});
  Var<T> sizes = add(sum_to(p, {NC, 1}), sum_to(y, {NC, 1}));
  Var<T> dice = div(add_scalar(mul_scalar(inter, 2.0), eps), add_scalar(sizes, eps));

  Tensor<T> present({NC, 1});
  double count = 0;
  for (int64_t r = 0; r < NC; ++r) {
    T ysum = 0;
    const T* yr = onehot.val().data() + r * HW;
    for (int64_t i = 0; i < HW; ++i) ysum += yr[i];
    present[r] = ysum > 0 ? T(1) : T(0);
    count += present[r];
  }
  if (count == 0) throw DegenerateInput("dice: target has no labeled pixels");
  Var<T> avg = mul_scalar(sum(mul(dice, Var<T>(std::move(present)))), 1.0 / count);
  return add_scalar(neg(avg), 1.0);
}

/// Per-pixel cross-entropy of logits against one-hot targets, averaged over
/// all pixels in the batch.
template <typename T>
Var<T> cross_entropy_loss(const Var<T>& logits, const Var<T>& onehot) {
  const Shape& s = logits.shape();
  if (!logits.val().same_shape(onehot.val()) || s.size() != 4)
    throw ShapeError("cross-entropy: expected matching (N,C,H,W), got " + shape_str(s) +
                     " vs " + shape_str(onehot.shape()));
  Var<T> lp = log_softmax_channels(logits);
  return neg(mean(sum_to(mul(onehot, lp), {s[0], 1, s[2], s[3]})));
}

/// Segmentation objective: weighted soft-Dice plus cross-entropy.
template <typename T>
Var<T> segmentation_loss(const Var<T>& logits, const Var<T>& onehot, double lambda_dice,
                         double lambda_ce, double eps = 1e-5) {
  Var<T> l = mul_scalar(soft_dice_loss(logits, onehot, eps), lambda_dice);
  return add(l, mul_scalar(cross_entropy_loss(logits, onehot), lambda_ce));
}

// ---------------------------------------------------------------------------
// Non-saturating logistic GAN objectives.

template <typename T>
Var<T> gan_loss_d(const Var<T>& real_scores, const Var<T>& fake_scores) {
  return add(mean(softplus(neg(real_scores))), mean(softplus(fake_scores)));
}

template <typename T>
Var<T> gan_loss_g(const Var<T>& fake_scores) {
  return mean(softplus(neg(fake_scores)));
}

/// Gradient magnitude of the realness score at the real samples, kept in the
/// graph so it can itself be differentiated w.r.t. critic weights.
/// `real_images` must be a leaf with requires_grad set before the critic pass.
template <typename T>
Var<T> r1_penalty(const Var<T>& real_scores, const Var<T>& real_images) {
  Var<T> total = sum(real_scores);
  std::vector<Var<T>> gs = grad(total, {real_images}, /*create_graph=*/true);
  double inv_n = 1.0 / double(real_images.shape()[0]);
  return mul_scalar(sum(square(gs[0])), inv_n);
}

}  // namespace vda
