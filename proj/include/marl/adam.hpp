#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "marl/common.hpp"
#include "marl/params.hpp"
#include "marl/tensor.hpp"

namespace marl {

struct AdamConfig {
  double lr = 0.00028;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

// Bias-corrected Adam. Moment tensors mirror the trainable parameter shapes;
// the step counter increases by one per step() call. A step whose gradients
// contain NaN/Inf is rejected with the offending parameter named.
template <typename T>
class Adam {
 public:
  Adam(const ParamStore<T>& params, AdamConfig cfg) : cfg_(cfg) {
    m_.reserve(params.entries.size());
    v_.reserve(params.entries.size());
    for (const auto& e : params.entries) {
      m_.push_back(Tensor<T>(e.value.shape));
      v_.push_back(Tensor<T>(e.value.shape));
    }
  }

  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  void step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads) {
    MARL_CHECK(grads.size() == params.entries.size(),
               "gradient count ", grads.size(), " != parameter count ", params.entries.size());
    for (size_t p = 0; p < grads.size(); ++p) {
      MARL_CHECK(grads[p].shape == params.entries[p].value.shape,
                 "gradient shape ", shape_str(grads[p].shape), " != parameter ",
                 params.entries[p].name, " shape ",
                 shape_str(params.entries[p].value.shape));
      if (!params.entries[p].trainable) continue;
      for (const T& g : grads[p].data)
        MARL_CHECK(std::isfinite(double(g)), "non-finite gradient for parameter ",
                   params.entries[p].name, "; update rejected");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
    for (size_t p = 0; p < grads.size(); ++p) {
      if (!params.entries[p].trainable) continue;
      T* w = params.entries[p].value.ptr();
      T* m = m_[p].ptr();
      T* v = v_[p].ptr();
      const T* g = grads[p].ptr();
      const int64_t n = grads[p].size();
      for (int64_t i = 0; i < n; ++i) {
        m[i] = T(cfg_.beta1) * m[i] + T(1.0 - cfg_.beta1) * g[i];
        v[i] = T(cfg_.beta2) * v[i] + T(1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = double(m[i]) / bc1;
        const double vhat = double(v[i]) / bc2;
        w[i] = T(double(w[i]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace marl
