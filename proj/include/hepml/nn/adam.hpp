#pragma once

#include "hepml/nn/core.hpp"

namespace hepml::nn {

template <typename T>
struct AdamConfig {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-7);
};

/// Adam with bias correction over the canonical flat parameter vector:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
class Adam {
public:
  Adam(Eigen::Index size, AdamConfig<T> config = {})
      : config_(config), m_(FlatVec<T>::Zero(size)),
        v_(FlatVec<T>::Zero(size)) {}

  void step(FlatVec<T>& params, const FlatVec<T>& grads, T lr) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw ShapeError("nn", "adam state size mismatch");
    if (!grads.allFinite())
      throw TrainingError("nn", "non-finite gradient at adam step " +
                                    std::to_string(t_ + 1));
    ++t_;
    m_ = config_.beta1 * m_ + (T(1) - config_.beta1) * grads;
    v_ = config_.beta2 * v_.array() +
         (T(1) - config_.beta2) * grads.array().square();
    T bc1 = T(1) - std::pow(config_.beta1, T(t_));
    T bc2 = T(1) - std::pow(config_.beta2, T(t_));
    params.array() -=
        lr * (m_.array() / bc1) /
        ((v_.array() / bc2).sqrt() + config_.eps);
  }

  int64_t timestep() const { return t_; }
  const AdamConfig<T>& config() const { return config_; }
  FlatVec<T>& m() { return m_; }
  FlatVec<T>& v() { return v_; }
  const FlatVec<T>& m() const { return m_; }
  const FlatVec<T>& v() const { return v_; }
  void set_timestep(int64_t t) { t_ = t; }

private:
  AdamConfig<T> config_;
  FlatVec<T> m_, v_;
  int64_t t_ = 0;
};

}  // namespace hepml::nn
