// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "misfit/core/error.hpp"
#include "misfit/nn/layers.hpp"

namespace misfit {

// Adaptive-moment optimizer with bias correction. beta1 = 0.5 default per
// the trainer configuration.
template <typename S>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void attach(const std::vector<ParamGroup<S>*>& groups) {
    m_.clear();
    v_.clear();
    for (const auto* g : groups) {
      m_.emplace_back(g->value.shape());
      v_.emplace_back(g->value.shape());
    }
    t_ = 0;
  }

  void step(const std::vector<ParamGroup<S>*>& groups) {
    if (groups.size() != m_.size()) throw ValidationError("adam: group count changed since attach");
    ++t_;
    const S b1 = static_cast<S>(beta1_);
    const S b2 = static_cast<S>(beta2_);
    const S corr1 = static_cast<S>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
    const S corr2 = static_cast<S>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
    const S lr = static_cast<S>(lr_);
    const S eps = static_cast<S>(eps_);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      ParamGroup<S>& g = *groups[gi];
      Tensor<S>& m = m_[gi];
      Tensor<S>& v = v_[gi];
      for (std::size_t i = 0; i < g.size(); ++i) {
        const S grad = g.grad[i];
        m[i] = b1 * m[i] + (S(1) - b1) * grad;
        v[i] = b2 * v[i] + (S(1) - b2) * grad * grad;
        const S mhat = m[i] / corr1;
        const S vhat = v[i] / corr2;
        g.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::int64_t t() const { return t_; }
  void set_t(std::int64_t t) { t_ = t; }
  std::vector<Tensor<S>>& moment1() { return m_; }
  std::vector<Tensor<S>>& moment2() { return v_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Tensor<S>> m_;
  std::vector<Tensor<S>> v_;
};

}  // namespace misfit
