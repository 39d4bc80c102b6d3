#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "uda/nn.hpp"

namespace uda::nn {

// Momentum SGD in the Chainer form: v <- mu*v - lr*(g + wd*p); p <- p + v.
class MomentumSgd {
 public:
  MomentumSgd() = default;
  MomentumSgd(double lr, double momentum, double weight_decay = 0.0)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::vector<ParamRef<float>>& params) {
    if (velocity_.empty()) {
      for (const auto& p : params) velocity_.emplace_back(p.value.size(), 0.0f);
    }
    if (velocity_.size() != params.size()) throw std::logic_error("MomentumSgd: parameter layout changed");
    const float lr = static_cast<float>(lr_), mu = static_cast<float>(momentum_), wd = static_cast<float>(weight_decay_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& v = velocity_[i];
      auto& p = params[i];
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = mu * v[j] - lr * (p.grad[j] + wd * p.value[j]);
        p.value[j] += v[j];
      }
    }
  }

  void reset() { velocity_.clear(); }
  // Changes hyperparameters and keeps the velocity.
  void configure(double lr, double momentum, double weight_decay) {
    lr_ = lr;
    momentum_ = momentum;
    weight_decay_ = weight_decay;
  }
  double lr() const { return lr_; }
  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }
  void set_lr(double lr) { lr_ = lr; }
  std::vector<std::vector<float>>& state() { return velocity_; }
  const std::vector<std::vector<float>>& state() const { return velocity_; }

 private:
  double lr_ = 1e-5, momentum_ = 0.9, weight_decay_ = 0.0;
  std::vector<std::vector<float>> velocity_;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<ParamRef<float>>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.value.size(), 0.0f);
        v_.emplace_back(p.value.size(), 0.0f);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_), c2 = 1.0 - std::pow(beta2_, t_);
    const float step = static_cast<float>(lr_ * std::sqrt(c2) / c1);
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_), eps = static_cast<float>(eps_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const float g = p.grad[j];
        m_[i][j] = b1 * m_[i][j] + (1 - b1) * g;
        v_[i][j] = b2 * v_[i][j] + (1 - b2) * g * g;
        p.value[j] -= step * m_[i][j] / (std::sqrt(v_[i][j]) + eps);
      }
    }
  }

 private:
  double lr_ = 1e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace uda::nn
