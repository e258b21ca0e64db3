#pragma once

#include "lto/core.hpp"

namespace lto::nn {

// Below this norm the denominator is padded so that zero vectors stay finite.
inline constexpr double kNormFloor = 1e-8;

inline double normalize_denominator(double norm) {
  return norm < kNormFloor ? norm + kNormFloor : norm;
}

/// Projects x onto the unit sphere (padded denominator near zero).
inline Vec l2_normalize(const Eigen::Ref<const Vec>& x) {
  return x / normalize_denominator(x.norm());
}

/// Vector-Jacobian product of l2_normalize at x.
inline Vec l2_normalize_backward(const Eigen::Ref<const Vec>& x, const Eigen::Ref<const Vec>& g) {
  const double n = x.norm();
  const double den = normalize_denominator(n);
  if (n == 0.0) return g / den;
  // d/dx [x / den(n)] = I/den - x x^T / (n den^2)
  return g / den - x * (x.dot(g) / (n * den * den));
}

}  // namespace lto::nn
