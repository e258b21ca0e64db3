#pragma once

#include <string>
#include <vector>

#include "lto/dynamics.hpp"
#include "lto/io/checkpoint.hpp"
#include "lto/nn/adam.hpp"
#include "lto/nn/mlp.hpp"

// Deterministic actor-critic (DDPG) with two critic formulations:
//
//   q: Q(z, a) trained on |Q(z,a) - (r + g (1-done) Q'(z', pi'(z')))| and
//      the actor on -Q(z, pi(z)).
//   v: V(z) trained on |V(z) - (r + g (1-done) V'(Psi(z, pi'(z))))| and the
//      actor on -V(Psi(z, pi(z))), i.e. the policy gradient flows through the
//      frozen dynamics model. The reward is assumed to be state-dependent.
//
// The on-policy value loss |V(z) - (r + g V'(z'))| is deliberately absent: it
// cannot learn off-policy and gives the actor no action gradient.
namespace lto {

enum class CriticKind { Q, V };

inline std::string to_string(CriticKind k) { return k == CriticKind::Q ? "q" : "v"; }
inline CriticKind parse_critic_kind(const std::string& s) {
  if (s == "q") return CriticKind::Q;
  if (s == "v") return CriticKind::V;
  throw ConfigError("unknown critic kind '" + s + "' (expected q or v)");
}

struct AgentConfig {
  CriticKind critic = CriticKind::Q;
  int stack = 1;
  int latent_dim = 20;
  int action_dim = 2;
  ActionBox box = ActionBox::uniform(2, -1.0, 1.0);
  std::vector<int> hidden{400, 300};
  double gamma = 0.99;
  double tau = 0.005;
  int batch = 64;
  std::size_t capacity = 1000000;
  double critic_lr = 1e-3;
  double actor_lr = 1e-4;
  double final_layer_init = 3e-3;
};

struct Transition {
  StackedLatent z;
  Action a;
  double r = 0.0;
  StackedLatent z_next;
  bool done = false;
};

/// Re-indexes one episode for the value critic, whose rewards belong to
/// states: entry t carries the reward received on arriving at z_t (first_reward
/// for the reset state), and the final state gets an entry of its own, marked
/// done when the episode ended in a terminal state.
inline std::vector<Transition> state_reward_transitions(const std::vector<Transition>& episode,
                                                        double first_reward = 0.0) {
  std::vector<Transition> out;
  if (episode.empty()) return out;
  out.reserve(episode.size() + 1);
  double r = first_reward;
  for (const auto& tr : episode) {
    out.push_back({tr.z, tr.a, r, tr.z_next, false});
    r = tr.r;
  }
  const auto& last = episode.back();
  out.push_back({last.z_next, last.a, last.r, last.z_next, last.done});
  return out;
}

/// Bounded FIFO of transitions with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1000000) : capacity_(capacity) {
    require(capacity > 0, "replay buffer: capacity must be positive");
  }

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }

  /// i-th oldest transition.
  const Transition& at(std::size_t i) const { return data_[(head_ + i) % data_.size()]; }

  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const {
    require(!data_.empty(), "replay buffer: cannot sample from an empty buffer");
    std::vector<const Transition*> out(n);
    for (auto& p : out) p = &data_[uniform_index(rng, data_.size())];
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

using TransitionBatch = std::vector<const Transition*>;

/// Column-stacked view of a transition batch.
struct BatchTensors {
  Mat z, a, z_next;
  Vec r, not_done;

  explicit BatchTensors(const TransitionBatch& batch) {
    require(!batch.empty(), "empty transition batch");
    const auto n = static_cast<Eigen::Index>(batch.size());
    z.resize(batch[0]->z.size(), n);
    a.resize(batch[0]->a.size(), n);
    z_next.resize(batch[0]->z_next.size(), n);
    r.resize(n);
    not_done.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Transition& t = *batch[static_cast<std::size_t>(i)];
      z.col(i) = t.z;
      a.col(i) = t.a;
      z_next.col(i) = t.z_next;
      r[i] = t.r;
      not_done[i] = t.done ? 0.0 : 1.0;
    }
  }
};

/// target' = tau * online + (1 - tau) * target, elementwise. tau = 0 and
/// tau = 1 return the respective operand unchanged.
inline Vec soft_update(const Vec& online, const Vec& target, double tau) {
  require(online.size() == target.size(), "soft_update: shape mismatch");
  require(tau >= 0.0 && tau <= 1.0, "soft_update: tau must lie in [0, 1]");
  if (tau == 0.0) return target;
  if (tau == 1.0) return online;
  return tau * online + (1.0 - tau) * target;
}

class Agent {
 public:
  Agent() = default;

  explicit Agent(AgentConfig cfg) : cfg_(std::move(cfg)) {
    require(cfg_.box.dim() == cfg_.action_dim, "agent: action box dimension does not match action_dim");
    require(cfg_.gamma >= 0.0 && cfg_.gamma <= 1.0, "agent: gamma must lie in [0, 1]");
    require(cfg_.batch > 0, "agent: batch must be positive");
    const int s = state_dim();
    actor_ = nn::Mlp(nn::layer_sizes(s, cfg_.hidden, cfg_.action_dim));
    critic_ = nn::Mlp(nn::layer_sizes(cfg_.critic == CriticKind::Q ? s + cfg_.action_dim : s, cfg_.hidden, 1));
    actor_target_ = actor_;
    critic_target_ = critic_;
    actor_opt_ = nn::Adam(actor_.num_params(), {.lr = cfg_.actor_lr});
    critic_opt_ = nn::Adam(critic_.num_params(), {.lr = cfg_.critic_lr});
  }

  /// Random initialization; targets start as exact copies.
  void init(Rng& rng) {
    actor_.init(rng, cfg_.final_layer_init);
    critic_.init(rng, cfg_.final_layer_init);
    actor_target_ = actor_;
    critic_target_ = critic_;
  }

  const AgentConfig& config() const { return cfg_; }
  CriticKind kind() const { return cfg_.critic; }
  int state_dim() const { return cfg_.stack * cfg_.latent_dim; }

  nn::Mlp& actor() { return actor_; }
  nn::Mlp& critic() { return critic_; }
  nn::Mlp& actor_target() { return actor_target_; }
  nn::Mlp& critic_target() { return critic_target_; }
  const nn::Mlp& actor() const { return actor_; }
  const nn::Mlp& critic() const { return critic_; }
  const nn::Mlp& actor_target() const { return actor_target_; }
  const nn::Mlp& critic_target() const { return critic_target_; }
  nn::Adam& actor_optimizer() { return actor_opt_; }
  nn::Adam& critic_optimizer() { return critic_opt_; }

  /// Maps unbounded network outputs into the action box.
  Mat squash(const Mat& o) const {
    Mat a = o.array().tanh().matrix();
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      a.col(c) = cfg_.box.clamp(cfg_.box.mid() + cfg_.box.half().cwiseProduct(a.col(c)));
    return a;
  }

  /// Chain rule through squash().
  Mat squash_backward(const Mat& o, const Mat& g) const {
    Mat t = o.array().tanh().matrix();
    Mat out = g.cwiseProduct((1.0 - t.array().square()).matrix());
    for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c) = out.col(c).cwiseProduct(cfg_.box.half());
    return out;
  }

  Mat act(const Mat& Z) const { return squash(actor_.forward(Z)); }
  Action act(const StackedLatent& z) const { return act(Mat(z)).col(0); }
  Mat act_target(const Mat& Z) const { return squash(actor_target_.forward(Z)); }

  double q_value(const StackedLatent& z, const Action& a) const {
    require(cfg_.critic == CriticKind::Q, "q_value: agent uses a value critic");
    Vec in(z.size() + a.size());
    in << z, a;
    return critic_.forward(Mat(in))(0, 0);
  }
  double v_value(const StackedLatent& z) const {
    require(cfg_.critic == CriticKind::V, "v_value: agent uses a Q critic");
    return critic_.forward(Mat(z))(0, 0);
  }

  io::Checkpoint to_checkpoint() const {
    io::Checkpoint ck;
    ck.header = {{"kind", "agent"},
                 {"variant", to_string(cfg_.critic)},
                 {"k", cfg_.stack},
                 {"d", cfg_.latent_dim},
                 {"m", cfg_.action_dim},
                 {"hidden", cfg_.hidden},
                 {"gamma", cfg_.gamma},
                 {"tau", cfg_.tau},
                 {"box_lo", std::vector<double>(cfg_.box.lo.data(), cfg_.box.lo.data() + cfg_.box.lo.size())},
                 {"box_hi", std::vector<double>(cfg_.box.hi.data(), cfg_.box.hi.data() + cfg_.box.hi.size())},
                 {"actor_steps", actor_opt_.steps()},
                 {"critic_steps", critic_opt_.steps()}};
    ck.add_flat("actor.", actor_.params(), actor_.layout());
    ck.add_flat("critic.", critic_.params(), critic_.layout());
    ck.add_flat("actor_target.", actor_target_.params(), actor_target_.layout());
    ck.add_flat("critic_target.", critic_target_.params(), critic_target_.layout());
    return ck;
  }

  static Agent from_checkpoint(const io::Checkpoint& ck, AgentConfig base = {}) {
    const auto& h = ck.header;
    require(h.value("kind", "") == "agent", "checkpoint: not an agent checkpoint");
    base.critic = parse_critic_kind(h.at("variant").get<std::string>());
    base.stack = h.at("k").get<int>();
    base.latent_dim = h.at("d").get<int>();
    base.action_dim = h.at("m").get<int>();
    base.hidden = h.at("hidden").get<std::vector<int>>();
    base.gamma = h.at("gamma").get<double>();
    base.tau = h.at("tau").get<double>();
    const auto lo = h.at("box_lo").get<std::vector<double>>();
    const auto hi = h.at("box_hi").get<std::vector<double>>();
    base.box = ActionBox(Eigen::Map<const Vec>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                         Eigen::Map<const Vec>(hi.data(), static_cast<Eigen::Index>(hi.size())));
    Agent ag(base);
    ck.read_flat("actor.", ag.actor_.params(), ag.actor_.layout());
    ck.read_flat("critic.", ag.critic_.params(), ag.critic_.layout());
    ck.read_flat("actor_target.", ag.actor_target_.params(), ag.actor_target_.layout());
    ck.read_flat("critic_target.", ag.critic_target_.params(), ag.critic_target_.layout());
    return ag;
  }

 private:
  AgentConfig cfg_;
  nn::Mlp actor_, critic_, actor_target_, critic_target_;
  nn::Adam actor_opt_, critic_opt_;
};

namespace detail {
inline Mat concat_rows(const Mat& top, const Mat& bottom) {
  Mat out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

inline double mean_abs_residual(const Mat& pred, const Vec& target, Mat* dpred) {
  const auto n = static_cast<double>(target.size());
  const Vec res = pred.row(0).transpose() - target;
  if (dpred != nullptr) {
    *dpred = Mat(1, res.size());
    for (Eigen::Index i = 0; i < res.size(); ++i)
      (*dpred)(0, i) = (res[i] > 0.0 ? 1.0 : (res[i] < 0.0 ? -1.0 : 0.0)) / n;
  }
  return res.cwiseAbs().sum() / n;
}
}  // namespace detail

/// Bellman residual for the Q critic; target networks are constants. When
/// grad is non-null it receives dL/d(critic params).
inline double loss_critic_q(const TransitionBatch& batch, const Agent& agent, Vec* grad = nullptr) {
  require(agent.kind() == CriticKind::Q, "loss_critic_q: agent is configured with a value critic");
  const BatchTensors b(batch);
  const Mat a_next = agent.act_target(b.z_next);
  const Vec q_next = agent.critic_target().forward(detail::concat_rows(b.z_next, a_next)).row(0).transpose();
  const Vec target = b.r + agent.config().gamma * b.not_done.cwiseProduct(q_next);
  nn::Mlp::Tape tape;
  const Mat q = agent.critic().forward(detail::concat_rows(b.z, b.a), tape);
  Mat dq;
  const double loss = detail::mean_abs_residual(q, target, grad != nullptr ? &dq : nullptr);
  if (grad != nullptr) {
    *grad = Vec::Zero(agent.critic().num_params());
    agent.critic().backward(tape, dq, grad);
  }
  return loss;
}

/// -mean Q(z, pi(z)); grad receives dL/d(actor params) only.
inline double loss_actor_q(const Mat& Z, const Agent& agent, Vec* grad = nullptr) {
  require(agent.kind() == CriticKind::Q, "loss_actor_q: agent is configured with a value critic");
  nn::Mlp::Tape actor_tape, critic_tape;
  const Mat o = agent.actor().forward(Z, actor_tape);
  const Mat a = agent.squash(o);
  const Mat q = agent.critic().forward(detail::concat_rows(Z, a), critic_tape);
  const auto n = static_cast<double>(Z.cols());
  if (grad != nullptr) {
    const Mat dq = Mat::Constant(1, Z.cols(), -1.0 / n);
    const Mat g_in = agent.critic().backward(critic_tape, dq, nullptr);
    const Mat ga = g_in.bottomRows(agent.config().action_dim);
    *grad = Vec::Zero(agent.actor().num_params());
    agent.actor().backward(actor_tape, agent.squash_backward(o, ga), grad);
  }
  return -q.sum() / n;
}

/// Off-policy value-critic residual: the bootstrap is evaluated at the
/// dynamics model's prediction under the target actor. No gradient reaches
/// the target networks or the dynamics model.
inline double loss_critic_v(const TransitionBatch& batch, const Agent& agent, const DynamicsModel& dyn,
                            Vec* grad = nullptr) {
  require(agent.kind() == CriticKind::V, "loss_critic_v: agent is configured with a Q critic");
  const BatchTensors b(batch);
  const Mat a_target = agent.act_target(b.z);
  const Mat z_pred = dyn.predict(b.z, a_target);
  const Vec v_next = agent.critic_target().forward(z_pred).row(0).transpose();
  const Vec target = b.r + agent.config().gamma * b.not_done.cwiseProduct(v_next);
  nn::Mlp::Tape tape;
  const Mat v = agent.critic().forward(b.z, tape);
  Mat dv;
  const double loss = detail::mean_abs_residual(v, target, grad != nullptr ? &dv : nullptr);
  if (grad != nullptr) {
    *grad = Vec::Zero(agent.critic().num_params());
    agent.critic().backward(tape, dv, grad);
  }
  return loss;
}

/// -mean V(Psi(z, pi(z))); the gradient reaches the actor through the frozen
/// dynamics model.
inline double loss_actor_v(const Mat& Z, const Agent& agent, const DynamicsModel& dyn, Vec* grad = nullptr) {
  require(agent.kind() == CriticKind::V, "loss_actor_v: agent is configured with a Q critic");
  nn::Mlp::Tape actor_tape, critic_tape;
  DynamicsModel::Tape dyn_tape;
  const Mat o = agent.actor().forward(Z, actor_tape);
  const Mat a = agent.squash(o);
  const Mat z_next = dyn.forward(Z, a, dyn_tape);
  const Mat v = agent.critic().forward(z_next, critic_tape);
  const auto n = static_cast<double>(Z.cols());
  if (grad != nullptr) {
    const Mat dv = Mat::Constant(1, Z.cols(), -1.0 / n);
    const Mat gz = agent.critic().backward(critic_tape, dv, nullptr);
    const auto [gZ, gA] = dyn.backward(dyn_tape, gz, nullptr);
    *grad = Vec::Zero(agent.actor().num_params());
    agent.actor().backward(actor_tape, agent.squash_backward(o, gA), grad);
  }
  return -v.sum() / n;
}

struct TrainStepResult {
  bool updated = false;  // false: buffer smaller than the batch, nothing changed
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

/// One critic update, one actor update and one soft target update, in that
/// order. `dyn` is required for the value critic and ignored otherwise.
inline TrainStepResult train_step(const ReplayBuffer& buffer, Agent& agent, const DynamicsModel* dyn, Rng& rng) {
  const auto& cfg = agent.config();
  TrainStepResult res;
  if (buffer.size() < static_cast<std::size_t>(cfg.batch)) return res;
  if (cfg.critic == CriticKind::V) require(dyn != nullptr, "train_step: value critic needs a dynamics model");
  const TransitionBatch batch = buffer.sample(static_cast<std::size_t>(cfg.batch), rng);

  Vec g;
  res.critic_loss = cfg.critic == CriticKind::Q ? loss_critic_q(batch, agent, &g) : loss_critic_v(batch, agent, *dyn, &g);
  if (!std::isfinite(res.critic_loss) || !g.allFinite()) throw DivergenceError("train_step: non-finite critic loss");
  agent.critic_optimizer().step(agent.critic().params(), g);

  const BatchTensors b(batch);
  res.actor_loss = cfg.critic == CriticKind::Q ? loss_actor_q(b.z, agent, &g) : loss_actor_v(b.z, agent, *dyn, &g);
  if (!std::isfinite(res.actor_loss) || !g.allFinite()) throw DivergenceError("train_step: non-finite actor loss");
  agent.actor_optimizer().step(agent.actor().params(), g);

  agent.actor_target().params() = soft_update(agent.actor().params(), agent.actor_target().params(), cfg.tau);
  agent.critic_target().params() = soft_update(agent.critic().params(), agent.critic_target().params(), cfg.tau);
  res.updated = true;
  return res;
}

}  // namespace lto
