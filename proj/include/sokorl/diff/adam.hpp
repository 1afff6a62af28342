#pragma once

#include <cmath>
#include <vector>

#include "sokorl/diff/params.hpp"

namespace sokorl::diff {

template <typename T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T grad_clip = T(0);  // 0 disables; otherwise clip global L2 norm to this value
};

// Standard Adam with bias correction over every parameter of a set.
template <typename T>
class AdamT {
 public:
  AdamT(ParameterSetT<T>& params, AdamConfig<T> cfg = {}) : params_(&params), cfg_(cfg) {
    m_.reserve(params.count());
    v_.reserve(params.count());
    for (size_t i = 0; i < params.count(); ++i) {
      m_.push_back(TensorT<T>::zeros(params[i].value.shape));
      v_.push_back(TensorT<T>::zeros(params[i].value.shape));
    }
  }

  int64_t step_count() const { return t_; }
  const AdamConfig<T>& config() const { return cfg_; }

  void step() {
    ParameterSetT<T>& ps = *params_;
    T scale = T(1);
    if (cfg_.grad_clip > T(0)) {
      double sq = 0;
      for (size_t i = 0; i < ps.count(); ++i)
        for (int64_t j = 0; j < ps[i].grad.size(); ++j)
          sq += static_cast<double>(ps[i].grad[j]) * static_cast<double>(ps[i].grad[j]);
      const double norm = std::sqrt(sq);
      if (norm > static_cast<double>(cfg_.grad_clip))
        scale = static_cast<T>(static_cast<double>(cfg_.grad_clip) / norm);
    }
    ++t_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (size_t i = 0; i < ps.count(); ++i) {
      ParamT<T>& p = ps[i];
      TensorT<T>& m = m_[i];
      TensorT<T>& v = v_[i];
      for (int64_t j = 0; j < p.value.size(); ++j) {
        const T g = p.grad[j] * scale;
        m[j] = cfg_.beta1 * m[j] + (T(1) - cfg_.beta1) * g;
        v[j] = cfg_.beta2 * v[j] + (T(1) - cfg_.beta2) * g * g;
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        p.value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
    ps.bump_version();
  }

 private:
  ParameterSetT<T>* params_;
  AdamConfig<T> cfg_;
  std::vector<TensorT<T>> m_, v_;
  int64_t t_ = 0;
};

using Adam = AdamT<float>;

}  // namespace sokorl::diff
