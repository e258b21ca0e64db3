#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "lto/core.hpp"

namespace lto::harness {

/// Highest success fraction over any run of `window` consecutive episodes.
inline double best_window_rate(const std::vector<bool>& successes, int window = 50) {
  require(window >= 1, "success_rate: window must be positive");
  const auto n = successes.size();
  require(n >= static_cast<std::size_t>(window),
          "success_rate: need at least " + std::to_string(window) + " records, got " + std::to_string(n));
  const auto w = static_cast<std::size_t>(window);
  long count = 0;
  for (std::size_t i = 0; i < w; ++i) count += successes[i] ? 1 : 0;
  long best = count;
  for (std::size_t i = w; i < n; ++i) {
    count += (successes[i] ? 1 : 0) - (successes[i - w] ? 1 : 0);
    best = std::max(best, count);
  }
  return static_cast<double>(best) / static_cast<double>(window);
}

struct SuccessSummary {
  std::vector<double> best;  // one per experiment
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single experiment
};

inline SuccessSummary success_rate(const std::vector<std::vector<bool>>& experiments, int window = 50) {
  require(!experiments.empty(), "success_rate: no experiments");
  SuccessSummary s;
  for (const auto& e : experiments) s.best.push_back(best_window_rate(e, window));
  const double n = static_cast<double>(s.best.size());
  for (double b : s.best) s.mean += b / n;
  if (s.best.size() > 1) {
    double ss = 0.0;
    for (double b : s.best) ss += (b - s.mean) * (b - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

namespace detail {

/// Weights w such that w . y[c-h .. c+h] is the value at the centre of the
/// least-squares polynomial of the given degree.
inline Vec savgol_center_weights(int half, int degree) {
  const int len = 2 * half + 1;
  Mat V(len, degree + 1);
  for (int i = 0; i < len; ++i) {
    double p = 1.0;
    for (int d = 0; d <= degree; ++d) {
      V(i, d) = p;
      p *= static_cast<double>(i - half);
    }
  }
  const Mat pinv = (V.transpose() * V).ldlt().solve(V.transpose());
  return pinv.row(0).transpose();
}

}  // namespace detail

/// Savitzky-Golay smoothing. Near the ends the window shrinks symmetrically to
/// the available neighbours and the degree is capped at the window's 2h.
inline std::vector<double> smooth(const std::vector<double>& series, int window = 21, int order = 1) {
  require(window >= 1 && window % 2 == 1, "smooth: window must be odd and positive");
  require(order >= 0, "smooth: order must be non-negative");
  require(static_cast<std::size_t>(window) <= series.size(), "smooth: window longer than the series");
  const int n = static_cast<int>(series.size());
  const int h = window / 2;
  std::map<int, Vec> weights;
  std::vector<double> out(series.size());
  for (int i = 0; i < n; ++i) {
    const int hi = std::min({h, i, n - 1 - i});
    auto it = weights.find(hi);
    if (it == weights.end()) it = weights.emplace(hi, detail::savgol_center_weights(hi, std::min(order, 2 * hi))).first;
    const Vec& w = it->second;
    double acc = 0.0;
    for (int k = -hi; k <= hi; ++k) acc += w[k + hi] * series[static_cast<std::size_t>(i + k)];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

/// Per-index mean and sample standard deviation over curves truncated to the
/// shortest length.
struct CurveBand {
  std::vector<double> mean;
  std::vector<double> std;
};

inline CurveBand aggregate_curves(const std::vector<std::vector<double>>& curves) {
  CurveBand b;
  if (curves.empty()) return b;
  std::size_t len = curves.front().size();
  for (const auto& c : curves) len = std::min(len, c.size());
  const double n = static_cast<double>(curves.size());
  b.mean.assign(len, 0.0);
  b.std.assign(len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    for (const auto& c : curves) b.mean[i] += c[i] / n;
    if (curves.size() > 1) {
      double ss = 0.0;
      for (const auto& c : curves) ss += (c[i] - b.mean[i]) * (c[i] - b.mean[i]);
      b.std[i] = std::sqrt(ss / (n - 1.0));
    }
  }
  return b;
}

}  // namespace lto::harness
