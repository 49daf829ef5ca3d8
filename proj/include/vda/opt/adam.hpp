#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vda/ad/var.hpp"
#include "vda/nn/layers.hpp"

namespace vda {

/// Adam with per-parameter learning-rate multipliers. Parameters whose
/// gradient buffer was not touched since the last zero_grad are skipped
/// outright — values, moments, and step counters all stay put — which is what
/// makes selective-update training steps bit-exact no-ops elsewhere.
template <typename T>
class Adam {
 public:
  struct Group {
    Var<T> param;
    double lr_mul = 1.0;
  };

  Adam(std::vector<Group> groups, double lr, double beta1 = 0.0, double beta2 = 0.99,
       double eps = 1e-8)
      : groups_(std::move(groups)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(groups_.size());
    v_.resize(groups_.size());
    t_.assign(groups_.size(), 0);
  }

  static std::vector<Group> wrap(const std::vector<Var<T>>& vars, double lr_mul = 1.0) {
    std::vector<Group> gs;
    gs.reserve(vars.size());
    for (const auto& v : vars) gs.push_back({v, lr_mul});
    return gs;
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void zero_grad() {
    for (auto& g : groups_) g.param.zero_grad();
  }

  void step() {
    for (size_t i = 0; i < groups_.size(); ++i) {
      Node<T>* n = groups_[i].param.node();
      if (n->grad_steps == 0 || !n->grad.defined()) continue;
      if (!m_[i].defined()) {
        m_[i] = Tensor<T>::zeros(n->value.shape());
        v_[i] = Tensor<T>::zeros(n->value.shape());
      }
      ++t_[i];
      double bc1 = 1.0 - std::pow(beta1_, double(t_[i]));
      double bc2 = 1.0 - std::pow(beta2_, double(t_[i]));
      double alpha = lr_ * groups_[i].lr_mul;
      T* p = n->value.data();
      const T* g = n->grad.data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (int64_t k = 0, sz = n->value.numel(); k < sz; ++k) {
        m[k] = T(beta1_ * m[k] + (1.0 - beta1_) * g[k]);
        v[k] = T(beta2_ * v[k] + (1.0 - beta2_) * double(g[k]) * g[k]);
        double mhat = m[k] / bc1;
        double vhat = v[k] / bc2;
        p[k] = T(p[k] - alpha * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  /// Hard reset of moments and counters (used after a divergence rollback).
  void reset_state() {
    for (auto& t : m_) t = Tensor<T>();
    for (auto& t : v_) t = Tensor<T>();
    t_.assign(groups_.size(), 0);
  }

  const std::vector<int64_t>& step_counts() const { return t_; }

 private:
  std::vector<Group> groups_;
  double lr_, beta1_, beta2_, eps_;
  std::vector<Tensor<T>> m_, v_;
  std::vector<int64_t> t_;
};

/// Exponential moving average of a parameter store, tracked in plain tensors.
template <typename T>
class EmaCopy {
 public:
  EmaCopy() = default;
  EmaCopy(const ParamStore<T>& ps, double decay) : decay_(decay) {
    for (const auto& [_, v] : ps.items()) shadow_.push_back(v.val().clone());
  }

  void update(const ParamStore<T>& ps) {
    const auto& items = ps.items();
    for (size_t i = 0; i < items.size(); ++i) {
      T* s = shadow_[i].data();
      const T* p = items[i].second.val().data();
      for (int64_t k = 0, sz = shadow_[i].numel(); k < sz; ++k)
        s[k] = T(decay_ * s[k] + (1.0 - decay_) * p[k]);
    }
  }

  /// Writes the averaged weights into (typically a separate) store.
  void copy_to(ParamStore<T>& ps) const {
    auto& items = ps.items();
    for (size_t i = 0; i < items.size(); ++i) {
      T* dst = items[i].second.mutable_val().data();
      const T* src = shadow_[i].data();
      for (int64_t k = 0, sz = shadow_[i].numel(); k < sz; ++k) dst[k] = src[k];
    }
  }

  std::vector<Tensor<T>>& tensors() { return shadow_; }
  const std::vector<Tensor<T>>& tensors() const { return shadow_; }

 private:
  double decay_ = 0.999;
  std::vector<Tensor<T>> shadow_;
};

}  // namespace vda
