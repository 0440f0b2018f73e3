#pragma once

#include <cmath>
#include <vector>

#include "camp/errors.hpp"
#include "camp/model.hpp"

namespace camp {

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8). Keeps one
/// moment pair per parameter slot; frozen parameters are skipped.
template <class T>
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<Parameter<T>>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = Tensor<T>(params[i].value.shape());
        v_[i] = Tensor<T>(params[i].value.shape());
      }
    }
    ++t_;
    const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(beta1_, t_)));
    const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(beta2_, t_)));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T lr = static_cast<T>(lr_), eps = static_cast<T>(eps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter<T>& p = params[i];
      if (!p.trainable) continue;
      if (!p.grad.same_shape(p.value))
        throw numeric_error("adam: gradient missing for parameter " + p.name);
      if (!p.grad.all_finite())
        throw numeric_error("adam: non-finite gradient in parameter " + p.name);
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const T g = p.grad[j];
        m[j] = b1 * m[j] + (T{1} - b1) * g;
        v[j] = b2 * v[j] + (T{1} - b2) * g * g;
        const T mhat = m[j] * c1;
        const T vhat = v[j] * c2;
        p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace camp
