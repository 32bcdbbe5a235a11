#ifndef UGR_ADAM_HPP
#define UGR_ADAM_HPP

#include <cmath>
#include <vector>

#include "ugr/tensor.hpp"

namespace ugr {

/// Adam with bias correction; beta = (0.9, 0.999), eps = 1e-8.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Tensor& p : params_) {
      m_.emplace_back(p.numel(), 0.0f);
      v_.emplace_back(p.numel(), 0.0f);
    }
  }

  // One update from the grads currently stored on the parameters.
  void step(float lr) {
    ++t_;
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      Tensor& p = params_[pi];
      if (!p.has_grad()) continue;
      float* w = p.data();
      const float* g = p.grad().data();
      float* m = m_[pi].data();
      float* v = v_[pi].data();
      const int64_t n = p.numel();
      for (int64_t i = 0; i < n; ++i) {
        m[i] = beta1_ * m[i] + (1.0f - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0f - beta2_) * g[i] * g[i];
        const float mhat = m[i] / bc1;
        const float vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  float beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace ugr

#endif
