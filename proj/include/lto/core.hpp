#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lto {

using Vec = Eigen::VectorXd;
// Batches are stored column-major: one sample per column.
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Unit-norm image embedding.
using Latent = Vec;

/// Raised when shapes, options or call order disagree with the configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a training loop produces a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ConfigError(what);
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

/// Axis-aligned action bounds.
struct ActionBox {
  Vec lo;
  Vec hi;

  ActionBox() = default;
  ActionBox(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    require(lo.size() == hi.size(), "action box: lo/hi size mismatch");
    require((lo.array() < hi.array()).all(), "action box: lo must be < hi");
  }
  static ActionBox uniform(int dim, double lo, double hi) {
    return ActionBox(Vec::Constant(dim, lo), Vec::Constant(dim, hi));
  }

  int dim() const { return static_cast<int>(lo.size()); }
  Vec mid() const { return 0.5 * (lo + hi); }
  Vec half() const { return 0.5 * (hi - lo); }
  Vec clamp(const Vec& a) const { return a.cwiseMax(lo).cwiseMin(hi); }
  bool contains(const Vec& a) const {
    return a.size() == lo.size() && (a.array() >= lo.array()).all() &&
           (a.array() <= hi.array()).all();
  }
};

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

inline Vec normal_vec(Rng& rng, int n) {
  Vec v(n);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Derive an independent stream from a parent seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out[0];
}

}  // namespace lto
