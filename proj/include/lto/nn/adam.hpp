#pragma once

#include "lto/core.hpp"

namespace lto::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second-moment adaptive step sizes over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, AdamConfig cfg) : cfg_(cfg), m_(Vec::Zero(n)), v_(Vec::Zero(n)) {}

  void step(Vec& params, const Vec& grad) {
    require(params.size() == m_.size() && grad.size() == m_.size(), "adam: size mismatch");
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr = cfg_.lr * std::sqrt(c2) / c1;
    params.array() -= lr * m_.array() / (v_.array().sqrt() + cfg_.eps);
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  Vec m_;
  Vec v_;
  long t_ = 0;
};

}  // namespace lto::nn
