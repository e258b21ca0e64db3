#pragma once

#include <string>
#include <vector>

#include "lto/io/checkpoint.hpp"
#include "lto/nn/adam.hpp"
#include "lto/nn/mlp.hpp"
#include "lto/nn/normalize.hpp"

namespace lto {

/// k consecutive unit-norm latents, oldest first, flattened to k*d values.
using StackedLatent = Vec;
using Action = Vec;

struct DynamicsConfig {
  int stack = 1;  // k
  int latent_dim = 20;
  int action_dim = 2;
  std::vector<int> hidden{400, 400};
};

/// Gradient of a step with respect to its two inputs.
struct StepGrad {
  Vec dz;
  Vec da;
};

/// Learned latent forward model. The network maps (Z, a) to the newest latent
/// block; predict() shifts the stack by one block and appends that output
/// projected back onto the unit sphere.
class DynamicsModel {
 public:
  struct Tape {
    nn::Mlp::Tape net;
    Mat raw;  // network output, one column per sample
    Mat out;  // predicted stacked latents
  };

  DynamicsModel() = default;
  explicit DynamicsModel(DynamicsConfig cfg)
      : cfg_(std::move(cfg)), net_(nn::layer_sizes(cfg_.stack * cfg_.latent_dim + cfg_.action_dim, cfg_.hidden,
                                                   cfg_.latent_dim)) {
    require(cfg_.stack >= 1 && cfg_.latent_dim >= 1 && cfg_.action_dim >= 1, "dynamics: dimensions must be positive");
  }

  void init(Rng& rng) { net_.init(rng); }

  const DynamicsConfig& config() const { return cfg_; }
  int state_dim() const { return cfg_.stack * cfg_.latent_dim; }
  int action_dim() const { return cfg_.action_dim; }
  nn::Mlp& network() { return net_; }
  const nn::Mlp& network() const { return net_; }
  Vec& params() { return net_.params(); }
  const Vec& params() const { return net_.params(); }

  /// Raw network output for a batch (columns are samples).
  Mat raw(const Mat& Z, const Mat& A) const { return net_.forward(stack_input(Z, A)); }

  Mat predict(const Mat& Z, const Mat& A) const {
    Tape tape;
    return forward(Z, A, tape);
  }

  StackedLatent predict(const StackedLatent& Z, const Action& a) const {
    Tape tape;
    return forward(Mat(Z), Mat(a), tape).col(0);
  }

  const Mat& forward(const Mat& Z, const Mat& A, Tape& tape) const {
    tape.raw = net_.forward(stack_input(Z, A), tape.net);
    const int d = cfg_.latent_dim;
    const int keep = state_dim() - d;
    tape.out.resize(state_dim(), Z.cols());
    // Shift: block i of the output is block i+1 of the input, copied exactly.
    if (keep > 0) tape.out.topRows(keep) = Z.bottomRows(keep);
    for (Eigen::Index c = 0; c < Z.cols(); ++c) tape.out.col(c).tail(d) = nn::l2_normalize(tape.raw.col(c));
    return tape.out;
  }

  /// Vector-Jacobian product of predict() with respect to (Z, A). Parameter
  /// gradients are accumulated into grad when non-null.
  std::pair<Mat, Mat> backward(const Tape& tape, const Mat& g_out, Vec* grad = nullptr) const {
    const int d = cfg_.latent_dim;
    const int keep = state_dim() - d;
    Mat g_raw(d, g_out.cols());
    for (Eigen::Index c = 0; c < g_out.cols(); ++c)
      g_raw.col(c) = nn::l2_normalize_backward(tape.raw.col(c), g_out.col(c).tail(d));
    const Mat g_in = net_.backward(tape.net, g_raw, grad);
    Mat gZ = g_in.topRows(state_dim());
    if (keep > 0) gZ.bottomRows(keep) += g_out.topRows(keep);
    return {gZ, g_in.bottomRows(cfg_.action_dim)};
  }

  io::Checkpoint to_checkpoint() const {
    io::Checkpoint ck;
    ck.header = {{"kind", "dynamics"},
                 {"k", cfg_.stack},
                 {"d", cfg_.latent_dim},
                 {"m", cfg_.action_dim},
                 {"hidden", cfg_.hidden}};
    ck.add_flat("dynamics.", net_.params(), net_.layout());
    return ck;
  }

  static DynamicsModel from_checkpoint(const io::Checkpoint& ck) {
    const auto& h = ck.header;
    require(h.value("kind", "") == "dynamics", "checkpoint: not a dynamics checkpoint");
    DynamicsModel m({h.at("k").get<int>(), h.at("d").get<int>(), h.at("m").get<int>(),
                     h.at("hidden").get<std::vector<int>>()});
    ck.read_flat("dynamics.", m.net_.params(), m.net_.layout());
    return m;
  }

 private:
  Mat stack_input(const Mat& Z, const Mat& A) const {
    require(Z.rows() == state_dim(), "dynamics: stacked latent has " + std::to_string(Z.rows()) +
                                         " values, expected " + std::to_string(state_dim()));
    require(A.rows() == cfg_.action_dim, "dynamics: action has " + std::to_string(A.rows()) +
                                             " values, expected " + std::to_string(cfg_.action_dim));
    require(Z.cols() == A.cols(), "dynamics: batch size mismatch");
    Mat in(Z.rows() + A.rows(), Z.cols());
    in << Z, A;
    return in;
  }

  DynamicsConfig cfg_;
  nn::Mlp net_;
};

inline StackedLatent predict(const StackedLatent& Z, const Action& a, const DynamicsModel& dyn) {
  return dyn.predict(Z, a);
}

/// result[0] = Z0, result[i + 1] = predict(result[i], actions[i]).
inline std::vector<StackedLatent> rollout(const StackedLatent& Z0, const std::vector<Action>& actions,
                                          const DynamicsModel& dyn) {
  std::vector<StackedLatent> out{Z0};
  out.reserve(actions.size() + 1);
  for (const auto& a : actions) out.push_back(dyn.predict(out.back(), a));
  return out;
}

/// One supervised sample: stacked latent, action, true next latent E(Im_{t+1}).
struct DynamicsSample {
  StackedLatent z;
  Action a;
  Latent z_next;
};

/// ||raw network output - target||_2 per sample, averaged over the batch.
/// Accumulates dL/dparams (scaled) into grad when non-null.
inline double loss_dynamics(const Mat& Z, const Mat& A, const Mat& targets, const DynamicsModel& dyn,
                            Vec* grad = nullptr, double scale = 1.0) {
  nn::Mlp::Tape tape;
  Mat in(Z.rows() + A.rows(), Z.cols());
  require(Z.rows() == dyn.state_dim() && A.rows() == dyn.action_dim(), "loss_dynamics: shape mismatch");
  require(targets.rows() == dyn.config().latent_dim && targets.cols() == Z.cols(), "loss_dynamics: target shape mismatch");
  in << Z, A;
  const Mat raw = dyn.network().forward(in, tape);
  const Mat diff = raw - targets;
  const Eigen::Index n = Z.cols();
  double total = 0.0;
  Mat g(diff.rows(), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const double r = diff.col(c).norm();
    total += r;
    g.col(c) = r > 0.0 ? Vec(diff.col(c) * (scale / (r * static_cast<double>(n)))) : Vec::Zero(diff.rows());
  }
  if (grad != nullptr) {
    if (grad->size() == 0) *grad = Vec::Zero(dyn.network().num_params());
    dyn.network().backward(tape, g, grad);
  }
  return total / static_cast<double>(n);
}

inline double loss_dynamics(const StackedLatent& Z, const Action& a, const Latent& z_next_true,
                            const DynamicsModel& dyn, Vec* grad = nullptr) {
  return loss_dynamics(Mat(Z), Mat(a), Mat(z_next_true), dyn, grad);
}

struct DynamicsTrainConfig {
  int steps = 200;
  int batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

inline void gather_batch(const std::vector<DynamicsSample>& data, const std::vector<std::size_t>& idx, Mat& Z, Mat& A,
                         Mat& T) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Z.resize(data[0].z.size(), n);
  A.resize(data[0].a.size(), n);
  T.resize(data[0].z_next.size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = data[idx[static_cast<std::size_t>(i)]];
    Z.col(i) = s.z;
    A.col(i) = s.a;
    T.col(i) = s.z_next;
  }
}

inline double mean_loss_dynamics(const std::vector<DynamicsSample>& data, const DynamicsModel& dyn) {
  require(!data.empty(), "mean_loss_dynamics: no samples");
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Mat Z, A, T;
  gather_batch(data, idx, Z, A, T);
  return loss_dynamics(Z, A, T, dyn);
}

/// Continues training `dyn` in place with `tc.steps` mini-batch updates drawn
/// uniformly with replacement. The optimizer state is owned by the caller so
/// that repeated per-episode calls keep their moment estimates.
inline void fit_dynamics(DynamicsModel& dyn, nn::Adam& opt, const std::vector<DynamicsSample>& data, int steps,
                         int batch, Rng& rng) {
  require(!data.empty(), "train_dynamics: no samples");
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
  Mat Z, A, T;
  for (int s = 0; s < steps; ++s) {
    for (auto& i : idx) i = uniform_index(rng, data.size());
    gather_batch(data, idx, Z, A, T);
    Vec grad = Vec::Zero(dyn.network().num_params());
    const double loss = loss_dynamics(Z, A, T, dyn, &grad);
    if (!std::isfinite(loss) || !grad.allFinite())
      throw DivergenceError("train_dynamics: non-finite loss at step " + std::to_string(s));
    opt.step(dyn.params(), grad);
  }
}

/// Fresh model initialized from the seed, then trained on `data`.
inline DynamicsModel train_dynamics(const std::vector<DynamicsSample>& data, const DynamicsConfig& cfg,
                                    const DynamicsTrainConfig& tc) {
  require(!data.empty(), "train_dynamics: no samples");
  Rng rng(tc.seed);
  DynamicsModel dyn(cfg);
  dyn.init(rng);
  nn::Adam opt(dyn.network().num_params(), {.lr = tc.lr});
  fit_dynamics(dyn, opt, data, tc.steps, tc.batch, rng);
  return dyn;
}

}  // namespace lto
