#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "lto/core.hpp"

namespace lto::nn {

/// Fully connected network with rectified-linear hidden layers and a linear
/// output layer. All weights and biases live in one flat parameter vector so
/// that optimizers, soft updates and checkpoints can treat it uniformly.
class Mlp {
 public:
  /// Activations recorded by forward() for a later backward() call.
  struct Tape {
    std::vector<Mat> inputs;  // inputs[l] is the input of layer l
    std::vector<Mat> pre;     // pre-activation of every layer
  };

  Mlp() = default;

  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    require(sizes_.size() >= 2, "mlp: need at least input and output sizes");
    for (int s : sizes_) require(s > 0, "mlp: layer sizes must be positive");
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(offsets_.back() + sizes_[l + 1] * sizes_[l] + sizes_[l + 1]);
    }
    params_ = Vec::Zero(offsets_.back());
  }

  /// Uniform fan-in initialization; the output layer uses +-final_scale when
  /// final_scale > 0.
  void init(Rng& rng, double final_scale = 0.0) {
    for (int l = 0; l < num_layers(); ++l) {
      const bool last = l + 1 == num_layers();
      const double bound = (last && final_scale > 0.0) ? final_scale : 1.0 / std::sqrt(sizes_[l]);
      std::uniform_real_distribution<double> dist(-bound, bound);
      const int begin = offsets_[l];
      for (int i = begin; i < offsets_[l + 1]; ++i) params_[i] = dist(rng);
    }
  }

  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int in_dim() const { return sizes_.front(); }
  int out_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  Eigen::Index num_params() const { return params_.size(); }

  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  Eigen::Map<const Mat> weight(int l) const {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<const Vec> bias(int l) const {
    return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]};
  }
  Eigen::Map<Mat> weight(int l) {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<Vec> bias(int l) {
    return {params_.data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]};
  }

  Mat forward(const Mat& x) const {
    check_input(x);
    Mat h = x;
    for (int l = 0; l < num_layers(); ++l) {
      Mat z = weight(l) * h;
      z.colwise() += bias(l);
      if (l + 1 < num_layers()) z = z.cwiseMax(0.0);
      h = std::move(z);
    }
    return h;
  }

  Mat forward(const Mat& x, Tape& tape) const {
    check_input(x);
    tape.inputs.resize(num_layers());
    tape.pre.resize(num_layers());
    Mat h = x;
    for (int l = 0; l < num_layers(); ++l) {
      tape.inputs[l] = h;
      Mat z = weight(l) * h;
      z.colwise() += bias(l);
      tape.pre[l] = z;
      h = (l + 1 < num_layers()) ? Mat(z.cwiseMax(0.0)) : z;
    }
    return h;
  }

  /// Back-propagates dy through the recorded pass. Parameter gradients are
  /// accumulated into grad when it is non-null; the input gradient is returned.
  Mat backward(const Tape& tape, const Mat& dy, Vec* grad) const {
    require(static_cast<int>(tape.pre.size()) == num_layers(), "mlp: tape does not match network");
    require(dy.rows() == out_dim(), "mlp: output gradient has wrong size");
    if (grad != nullptr) {
      if (grad->size() == 0) *grad = Vec::Zero(num_params());
      require(grad->size() == num_params(), "mlp: gradient buffer has wrong size");
    }
    Mat g = dy;
    for (int l = num_layers() - 1; l >= 0; --l) {
      if (l + 1 < num_layers()) g = g.cwiseProduct((tape.pre[l].array() > 0.0).cast<double>().matrix());
      if (grad != nullptr) {
        Eigen::Map<Mat> gw(grad->data() + offsets_[l], sizes_[l + 1], sizes_[l]);
        Eigen::Map<Vec> gb(grad->data() + offsets_[l] + sizes_[l + 1] * sizes_[l], sizes_[l + 1]);
        gw.noalias() += g * tape.inputs[l].transpose();
        gb += g.rowwise().sum();
      }
      g = weight(l).transpose() * g;
    }
    return g;
  }

  /// Named (weight, bias) arrays for checkpointing.
  std::vector<std::pair<std::string, std::vector<int>>> layout() const {
    std::vector<std::pair<std::string, std::vector<int>>> out;
    for (int l = 0; l < num_layers(); ++l) {
      out.push_back({"layer" + std::to_string(l) + ".weight", {sizes_[l + 1], sizes_[l]}});
      out.push_back({"layer" + std::to_string(l) + ".bias", {sizes_[l + 1]}});
    }
    return out;
  }

 private:
  void check_input(const Mat& x) const {
    require(!sizes_.empty(), "mlp: network has no layers");
    require(x.rows() == in_dim(), "mlp: input has " + std::to_string(x.rows()) + " rows, expected " +
                                      std::to_string(in_dim()));
  }

  std::vector<int> sizes_;
  std::vector<int> offsets_;
  Vec params_;
};

/// sizes = {in, hidden..., out}
inline std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

}  // namespace lto::nn
