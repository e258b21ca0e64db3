#pragma once

#include <concepts>
#include <deque>
#include <functional>
#include <optional>
#include <tuple>
#include <string>
#include <vector>

#include "lto/agent.hpp"
#include "lto/dynamics.hpp"

namespace lto {

// ---------------------------------------------------------------------------
// Ornstein-Uhlenbeck noise

struct OUConfig {
  double theta = 0.15;
  double sigma = 0.5;
  double dt = 1.0;
  double mu = 0.0;
};

/// x <- x + theta (mu - x) dt + sigma sqrt(dt) xi,  xi ~ N(0, I).
class OUProcess {
 public:
  OUProcess() = default;
  OUProcess(int dim, OUConfig cfg) : cfg_(cfg), x_(Vec::Constant(dim, cfg.mu)) {}

  const Vec& state() const { return x_; }
  void set_state(Vec x) { x_ = std::move(x); }
  void reset() { x_.setConstant(cfg_.mu); }
  const OUConfig& config() const { return cfg_; }

  /// Advances with an explicit standard-normal draw.
  const Vec& step_with(const Vec& xi) {
    require(xi.size() == x_.size(), "ou: noise dimension mismatch");
    x_ += cfg_.theta * (Vec::Constant(x_.size(), cfg_.mu) - x_) * cfg_.dt + cfg_.sigma * std::sqrt(cfg_.dt) * xi;
    return x_;
  }

  const Vec& step(Rng& rng) { return step_with(normal_vec(rng, static_cast<int>(x_.size()))); }

 private:
  OUConfig cfg_;
  Vec x_;
};

inline Vec ou_step(OUProcess& p, Rng& rng) { return p.step(rng); }

/// Stationary standard deviation of the discretized process, an AR(1) with
/// coefficient (1 - theta dt).
inline double ou_stationary_std(const OUConfig& c) {
  return c.sigma * std::sqrt(c.dt) / std::sqrt(2.0 * c.theta * c.dt - c.theta * c.theta * c.dt * c.dt);
}

// ---------------------------------------------------------------------------
// Differentiable building blocks for planning

struct CriticEval {
  double value = 0.0;
  Vec dz;
  Vec da;
};

struct RewardEval {
  double value = 0.0;
  Vec dz;
};

/// A latent transition z' = f(z, a) with a recorded tape for reverse mode.
template <class D>
concept StepModel = requires(const D& d, const Vec& z, const Vec& a, const typename D::StepTape& t, const Vec& g) {
  { d.step(z, a) } -> std::same_as<typename D::StepTape>;
  { t.out } -> std::convertible_to<Vec>;
  { d.step_backward(t, g) } -> std::same_as<StepGrad>;
};

/// Scores a state-action pair with gradients in both arguments.
template <class C>
concept CriticModel = requires(const C& c, const Vec& z, const Vec& a) {
  { c.evaluate(z, a) } -> std::same_as<CriticEval>;
};

/// State-only reward with gradient.
template <class R>
concept RewardModel = requires(const R& r, const Vec& z) {
  { r.evaluate(z) } -> std::same_as<RewardEval>;
};

/// Adapter exposing a DynamicsModel as a StepModel.
class NetworkDynamics {
 public:
  struct StepTape {
    DynamicsModel::Tape tape;
    Vec out;
  };
  explicit NetworkDynamics(const DynamicsModel& dyn) : dyn_(&dyn) {}
  StepTape step(const Vec& z, const Vec& a) const {
    StepTape t;
    t.out = dyn_->forward(Mat(z), Mat(a), t.tape).col(0);
    return t;
  }
  StepGrad step_backward(const StepTape& t, const Vec& g) const {
    auto [gz, ga] = dyn_->backward(t.tape, Mat(g));
    return {gz.col(0), ga.col(0)};
  }

 private:
  const DynamicsModel* dyn_;
};

/// Q(z, a) from a critic network over the concatenated input.
class QCritic {
 public:
  explicit QCritic(const nn::Mlp& net) : net_(&net) {}
  CriticEval evaluate(const Vec& z, const Vec& a) const {
    Vec in(z.size() + a.size());
    in << z, a;
    nn::Mlp::Tape tape;
    CriticEval e;
    e.value = net_->forward(Mat(in), tape)(0, 0);
    const Mat g = net_->backward(tape, Mat::Ones(1, 1), nullptr);
    e.dz = g.col(0).head(z.size());
    e.da = g.col(0).tail(a.size());
    return e;
  }

 private:
  const nn::Mlp* net_;
};

/// Substitutes V(Psi(z, a)) for Q(z, a).
class VCritic {
 public:
  VCritic(const nn::Mlp& value, const DynamicsModel& dyn) : net_(&value), dyn_(&dyn) {}
  CriticEval evaluate(const Vec& z, const Vec& a) const {
    DynamicsModel::Tape dt;
    const Mat zn = dyn_->forward(Mat(z), Mat(a), dt);
    nn::Mlp::Tape tape;
    CriticEval e;
    e.value = net_->forward(zn, tape)(0, 0);
    const Mat gzn = net_->backward(tape, Mat::Ones(1, 1), nullptr);
    auto [gz, ga] = dyn_->backward(dt, gzn);
    e.dz = gz.col(0);
    e.da = ga.col(0);
    return e;
  }

 private:
  const nn::Mlp* net_;
  const DynamicsModel* dyn_;
};

/// Learned state-to-reward mapping r(z).
class NetworkReward {
 public:
  explicit NetworkReward(const nn::Mlp& net) : net_(&net) {}
  RewardEval evaluate(const Vec& z) const {
    nn::Mlp::Tape tape;
    RewardEval e;
    e.value = net_->forward(Mat(z), tape)(0, 0);
    e.dz = net_->backward(tape, Mat::Ones(1, 1), nullptr).col(0);
    return e;
  }

 private:
  const nn::Mlp* net_;
};

/// Placeholder reward type for objectives that do not use rewards.
struct NoReward {
  RewardEval evaluate(const Vec&) const { throw ConfigError("objective needs a reward function"); }
};

// ---------------------------------------------------------------------------
// Planning objectives
//
// A plan holds H + 1 actions a_t .. a_{t+H}; states z_{t+1} .. z_{t+H} come from
// unrolling the step model. The value of the final action a_{t+H} only enters
// through the critic.

enum class ObjectiveKind { QSum, RPlusQ, TerminalQ };

inline std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::QSum: return "q_sum";
    case ObjectiveKind::RPlusQ: return "r_plus_q";
    case ObjectiveKind::TerminalQ: return "terminal_q";
  }
  return "?";
}

inline ObjectiveKind parse_objective_kind(const std::string& s) {
  if (s == "q_sum") return ObjectiveKind::QSum;
  if (s == "r_plus_q") return ObjectiveKind::RPlusQ;
  if (s == "terminal_q") return ObjectiveKind::TerminalQ;
  throw ConfigError("unknown objective '" + s + "' (expected q_sum, r_plus_q or terminal_q)");
}

struct ObjectiveValue {
  double value = 0.0;
  std::vector<Vec> grad;  // d value / d a_{t+j}, one entry per action
};

/// w_j = 1/H for j = 0..H.
inline Vec uniform_weights(int horizon) {
  require(horizon >= 1, "horizon must be at least 1");
  return Vec::Constant(horizon + 1, 1.0 / horizon);
}

namespace detail {

template <StepModel D>
std::vector<typename D::StepTape> unroll(const std::vector<Vec>& actions, const Vec& z0, const D& dyn,
                                         std::vector<Vec>& states) {
  const std::size_t H = actions.size() - 1;
  std::vector<typename D::StepTape> tapes;
  tapes.reserve(H);
  states.assign(1, z0);
  for (std::size_t j = 0; j < H; ++j) {
    tapes.push_back(dyn.step(states.back(), actions[j]));
    states.push_back(tapes.back().out);
  }
  return tapes;
}

/// Propagates state adjoints lambda_{t+H} back through the unrolled steps.
/// state_adj[j] holds the direct contribution of z_{t+j}; action grads
/// are accumulated into grad.
template <StepModel D>
void backpropagate(const std::vector<typename D::StepTape>& tapes, const D& dyn, std::vector<Vec> state_adj,
                   std::vector<Vec>& grad) {
  for (std::size_t j = tapes.size(); j-- > 0;) {
    const StepGrad g = dyn.step_backward(tapes[j], state_adj[j + 1]);
    state_adj[j] += g.dz;
    grad[j] += g.da;
  }
}

inline void check_plan(const std::vector<Vec>& actions, const Vec& weights) {
  require(!actions.empty(), "objective: need at least two actions (horizon >= 1)");
  require(actions.size() >= 2, "objective: horizon must be at least 1");
  require(weights.size() == static_cast<Eigen::Index>(actions.size()),
          "objective: expected " + std::to_string(actions.size()) + " weights, got " + std::to_string(weights.size()));
}

}  // namespace detail

/// w_0 Q(z_t, a_t) + sum_{j=1..H} w_j Q(z_{t+j}, a_{t+j}).
template <StepModel D, CriticModel C>
ObjectiveValue objective_q_sum(const std::vector<Vec>& actions, const Vec& z0, const C& critic, const D& dyn,
                               const Vec& weights) {
  detail::check_plan(actions, weights);
  std::vector<Vec> states;
  const auto tapes = detail::unroll(actions, z0, dyn, states);
  ObjectiveValue out;
  std::vector<Vec> adj(states.size());
  out.grad.resize(actions.size());
  for (std::size_t j = 0; j < actions.size(); ++j) {
    const CriticEval e = critic.evaluate(states[j], actions[j]);
    out.value += weights[static_cast<Eigen::Index>(j)] * e.value;
    adj[j] = weights[static_cast<Eigen::Index>(j)] * e.dz;
    out.grad[j] = weights[static_cast<Eigen::Index>(j)] * e.da;
  }
  detail::backpropagate(tapes, dyn, std::move(adj), out.grad);
  return out;
}

/// sum_{j=1..H-1} w_j r(z_{t+j}) + w_H Q(z_{t+H}, a_{t+H}).
template <StepModel D, CriticModel C, RewardModel R>
ObjectiveValue objective_r_plus_q(const std::vector<Vec>& actions, const Vec& z0, const R* reward, const C& critic,
                                  const D& dyn, const Vec& weights) {
  require(reward != nullptr, "objective_r_plus_q: a state reward function is required");
  detail::check_plan(actions, weights);
  std::vector<Vec> states;
  const auto tapes = detail::unroll(actions, z0, dyn, states);
  const std::size_t H = actions.size() - 1;
  ObjectiveValue out;
  std::vector<Vec> adj(states.size());
  out.grad.assign(actions.size(), Vec::Zero(actions[0].size()));
  adj[0] = Vec::Zero(z0.size());
  for (std::size_t j = 1; j < H; ++j) {
    const RewardEval e = reward->evaluate(states[j]);
    out.value += weights[static_cast<Eigen::Index>(j)] * e.value;
    adj[j] = weights[static_cast<Eigen::Index>(j)] * e.dz;
  }
  const CriticEval q = critic.evaluate(states[H], actions[H]);
  out.value += weights[static_cast<Eigen::Index>(H)] * q.value;
  adj[H] = weights[static_cast<Eigen::Index>(H)] * q.dz;
  out.grad[H] = weights[static_cast<Eigen::Index>(H)] * q.da;
  detail::backpropagate(tapes, dyn, std::move(adj), out.grad);
  return out;
}

/// Q(z_{t+H}, a_{t+H}) only.
template <StepModel D, CriticModel C>
ObjectiveValue objective_terminal_q(const std::vector<Vec>& actions, const Vec& z0, const C& critic, const D& dyn) {
  require(actions.size() >= 2, "objective: horizon must be at least 1");
  std::vector<Vec> states;
  const auto tapes = detail::unroll(actions, z0, dyn, states);
  const std::size_t H = actions.size() - 1;
  ObjectiveValue out;
  std::vector<Vec> adj(states.size(), Vec::Zero(z0.size()));
  out.grad.assign(actions.size(), Vec::Zero(actions[0].size()));
  const CriticEval q = critic.evaluate(states[H], actions[H]);
  out.value = q.value;
  adj[H] = q.dz;
  out.grad[H] = q.da;
  detail::backpropagate(tapes, dyn, std::move(adj), out.grad);
  return out;
}

template <StepModel D, CriticModel C, RewardModel R = NoReward>
ObjectiveValue evaluate_objective(ObjectiveKind kind, const std::vector<Vec>& actions, const Vec& z0, const C& critic,
                                  const D& dyn, const Vec& weights, const R* reward = nullptr) {
  switch (kind) {
    case ObjectiveKind::QSum: return objective_q_sum(actions, z0, critic, dyn, weights);
    case ObjectiveKind::RPlusQ: return objective_r_plus_q(actions, z0, reward, critic, dyn, weights);
    case ObjectiveKind::TerminalQ: return objective_terminal_q(actions, z0, critic, dyn);
  }
  throw ConfigError("unknown objective kind");
}

// ---------------------------------------------------------------------------
// Planner

struct PlannerConfig {
  int max_iterations = 20;
  int memory = 10;
  double gtol = 1e-6;
  double armijo = 1e-4;
  int max_backtracks = 40;
};

struct PlanProblem {
  StackedLatent z0;
  int horizon = 1;
  ObjectiveKind objective = ObjectiveKind::QSum;
  Vec weights;  // H + 1 entries; empty means 1/H each
  ActionBox box;
  PlannerConfig settings;
};

struct PlanResult {
  std::vector<Action> actions;  // a_t .. a_{t+H}
  double initial_value = 0.0;
  double final_value = 0.0;
  int iterations = 0;
  std::vector<double> trace;  // objective after initialization and each accepted iteration
  bool fell_back = false;     // non-finite objective at initialization
};

namespace detail {

inline Vec flatten_actions(const std::vector<Vec>& a) {
  const auto m = a[0].size();
  Vec x(m * static_cast<Eigen::Index>(a.size()));
  for (std::size_t j = 0; j < a.size(); ++j) x.segment(static_cast<Eigen::Index>(j) * m, m) = a[j];
  return x;
}

inline std::vector<Vec> split_actions(const Vec& x, Eigen::Index m) {
  std::vector<Vec> a(static_cast<std::size_t>(x.size() / m));
  for (std::size_t j = 0; j < a.size(); ++j) a[j] = x.segment(static_cast<Eigen::Index>(j) * m, m);
  return a;
}

inline Vec project(const Vec& x, const Vec& lo, const Vec& hi) { return x.cwiseMax(lo).cwiseMin(hi); }

}  // namespace detail

/// Box-constrained limited-memory quasi-Newton minimization of `fn` (value
/// and gradient), with Armijo backtracking along the projected path.
/// Iterates are projected onto [lo, hi] after every trial step and the best
/// iterate is returned.
struct BoxMinimizer {
  PlannerConfig cfg;

  struct Result {
    Vec x;
    double f = 0.0;
    int iterations = 0;
    std::vector<double> trace;
  };

  template <class Fn>
  Result minimize(Fn&& fn, Vec x, const Vec& lo, const Vec& hi) const {
    x = detail::project(x, lo, hi);
    double f = 0.0;
    Vec g;
    std::tie(f, g) = fn(x);
    Result best{x, f, 0, {f}};
    std::deque<std::pair<Vec, Vec>> mem;  // (s, y) pairs, newest last
    const double step0 = (hi - lo).maxCoeff();

    auto free_direction = [&](Vec d) {
      for (Eigen::Index i = 0; i < d.size(); ++i)
        if ((x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0)) d[i] = 0.0;
      return d;
    };
    auto steepest = [&]() {
      const double n = g.norm();
      return Vec(free_direction(-g * (step0 / n)));
    };

    for (int it = 0; it < cfg.max_iterations; ++it) {
      const Vec pg = detail::project(x - g, lo, hi) - x;
      if (pg.lpNorm<Eigen::Infinity>() <= cfg.gtol) break;

      Vec d;
      if (mem.empty()) {
        d = steepest();
      } else {
        // Two-loop recursion.
        Vec q = g;
        std::vector<double> alpha(mem.size());
        for (std::size_t i = mem.size(); i-- > 0;) {
          const auto& [s, y] = mem[i];
          alpha[i] = s.dot(q) / y.dot(s);
          q -= alpha[i] * y;
        }
        const auto& [s_last, y_last] = mem.back();
        Vec r = q * (s_last.dot(y_last) / y_last.dot(y_last));
        for (std::size_t i = 0; i < mem.size(); ++i) {
          const auto& [s, y] = mem[i];
          const double beta = y.dot(r) / y.dot(s);
          r += s * (alpha[i] - beta);
        }
        d = free_direction(-r);
      }
      if (!(g.dot(d) < 0.0)) {
        mem.clear();
        d = steepest();
        if (!(g.dot(d) < 0.0)) break;
      }

      bool accepted = false;
      double step = 1.0;
      Vec xn;
      double fn_val = 0.0;
      Vec gn;
      for (int b = 0; b < cfg.max_backtracks; ++b, step *= 0.5) {
        xn = detail::project(x + step * d, lo, hi);
        double ft = 0.0;
        Vec gt;
        std::tie(ft, gt) = fn(xn);
        if (std::isfinite(ft) && ft <= f + cfg.armijo * g.dot(xn - x) && ft <= f) {
          fn_val = ft;
          gn = std::move(gt);
          accepted = true;
          break;
        }
      }
      if (!accepted) break;

      Vec s = xn - x;
      Vec y = gn - g;
      if (s.dot(y) > 1e-12 * std::max(1.0, y.squaredNorm())) {
        mem.emplace_back(std::move(s), std::move(y));
        if (static_cast<int>(mem.size()) > cfg.memory) mem.pop_front();
      }
      x = std::move(xn);
      f = fn_val;
      g = std::move(gn);
      ++best.iterations;
      best.trace.push_back(f);
      if (f < best.f) {
        best.x = x;
        best.f = f;
      }
    }
    return best;
  }
};

/// Initializes the plan by rolling the actor through the dynamics, then
/// maximizes the chosen objective over a_t .. a_{t+H} inside the box.
template <class Actor, StepModel D, CriticModel C, RewardModel R = NoReward>
PlanResult plan(const PlanProblem& problem, const Actor& actor, const C& critic, const D& dyn,
                const R* reward = nullptr) {
  require(problem.horizon >= 1, "plan: horizon must be at least 1");
  const Vec weights = problem.weights.size() == 0 ? uniform_weights(problem.horizon) : problem.weights;
  require(weights.size() == problem.horizon + 1, "plan: weights must have horizon + 1 entries");
  require((weights.array() >= 0.0).all(), "plan: weights must be nonnegative");
  const Eigen::Index m = problem.box.dim();

  std::vector<Vec> init;
  Vec z = problem.z0;
  for (int k = 0; k <= problem.horizon; ++k) {
    init.push_back(problem.box.clamp(actor(z)));
    require(init.back().size() == m, "plan: actor output does not match the action box");
    if (k < problem.horizon) z = dyn.step(z, init.back()).out;
  }

  PlanResult res;
  const auto evaluate = [&](const Vec& x) {
    const ObjectiveValue v =
        evaluate_objective(problem.objective, detail::split_actions(x, m), problem.z0, critic, dyn, weights, reward);
    return std::pair<double, Vec>{-v.value, -detail::flatten_actions(v.grad)};
  };

  const Vec x0 = detail::flatten_actions(init);
  const auto [f0, g0] = evaluate(x0);
  if (!std::isfinite(f0) || !g0.allFinite()) {
    res.actions = init;
    res.fell_back = true;
    res.initial_value = res.final_value = -f0;
    return res;
  }

  Vec lo(x0.size()), hi(x0.size());
  for (int k = 0; k <= problem.horizon; ++k) {
    lo.segment(k * m, m) = problem.box.lo;
    hi.segment(k * m, m) = problem.box.hi;
  }
  const auto r = BoxMinimizer{problem.settings}.minimize(evaluate, x0, lo, hi);
  res.actions = detail::split_actions(r.x, m);
  res.initial_value = -f0;
  res.final_value = -r.f;
  res.iterations = r.iterations;
  for (double v : r.trace) res.trace.push_back(-v);
  return res;
}

// ---------------------------------------------------------------------------
// Exploration strategy

enum class ExplorerKind { Ou, TrajOpt };

inline std::string to_string(ExplorerKind k) { return k == ExplorerKind::Ou ? "ou" : "trajopt"; }
inline ExplorerKind parse_explorer_kind(const std::string& s) {
  if (s == "ou") return ExplorerKind::Ou;
  if (s == "trajopt") return ExplorerKind::TrajOpt;
  throw ConfigError("unknown explorer '" + s + "' (expected ou or trajopt)");
}

/// Everything explore_action needs besides the state.
struct ExploreContext {
  ExplorerKind kind = ExplorerKind::Ou;
  const Agent* agent = nullptr;
  const DynamicsModel* dynamics = nullptr;  // trajopt, and the value critic
  const nn::Mlp* reward = nullptr;          // r_plus_q only
  OUProcess* ou = nullptr;                  // ou only
  ObjectiveKind objective = ObjectiveKind::QSum;
  int horizon = 1;
  Vec weights;
  PlannerConfig planner;
};

/// Evaluation returns the actor's action untouched. During training, ou adds
/// box-scaled OU noise and clips; trajopt executes the first planned action.
inline Action explore_action(const StackedLatent& z, const ExploreContext& ctx, bool training, Rng& rng,
                             PlanResult* plan_out = nullptr) {
  require(ctx.agent != nullptr, "explore_action: agent is required");
  const Agent& agent = *ctx.agent;
  const Action base = agent.act(z);
  if (!training) return base;
  const ActionBox& box = agent.config().box;
  if (ctx.kind == ExplorerKind::Ou) {
    require(ctx.ou != nullptr, "explore_action: ou mode needs an OU process");
    const Vec& noise = ctx.ou->step(rng);
    return box.clamp(base + box.half().cwiseProduct(noise));
  }
  require(ctx.dynamics != nullptr, "explore_action: trajopt needs a dynamics model");
  PlanProblem problem{z, ctx.horizon, ctx.objective, ctx.weights, box, ctx.planner};
  const auto actor = [&](const Vec& s) { return agent.act(s); };
  const NetworkDynamics dyn(*ctx.dynamics);
  PlanResult r;
  std::optional<NetworkReward> reward;
  if (ctx.reward != nullptr) reward.emplace(*ctx.reward);
  const NetworkReward* reward_ptr = reward ? &*reward : nullptr;
  if (agent.kind() == CriticKind::Q) {
    r = plan(problem, actor, QCritic(agent.critic()), dyn, reward_ptr);
  } else {
    r = plan(problem, actor, VCritic(agent.critic(), *ctx.dynamics), dyn, reward_ptr);
  }
  Action a = r.actions.front();
  if (plan_out != nullptr) *plan_out = std::move(r);
  return a;
}

}  // namespace lto
