// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../common/oracles.hpp"
#include "lto/lto.hpp"

using namespace lto;
using lto::testing::fd_gradient;
using lto::testing::max_rel_error;
using lto::testing::QuadraticPlan;
namespace fs = std::filesystem;

#ifndef LTO_CONFIG_DIR
#define LTO_CONFIG_DIR "configs"
#endif

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Vec unit_blocks(Rng& rng, int k, int d) {
  Vec z(k * d);
  for (int i = 0; i < k; ++i) z.segment(i * d, d) = nn::l2_normalize(normal_vec(rng, d));
  return z;
}

Image random_image(Rng& rng, int h, int w, int c) {
  Image im(h, w, c);
  for (auto& p : im.pixels) p = static_cast<float>(uniform(rng, 0.0, 1.0));
  return im;
}

// ---------------------------------------------------------------------------
// 1. Gradients against central differences

Outcome gradient_suite() {
  const double tol = 1e-3;
  std::vector<std::pair<std::string, double>> errs;
  Rng rng(101);

  {
    EmbeddingConfig c;
    c.height = 6;
    c.width = 6;
    c.channels = 3;
    c.latent_dim = 3;
    c.conv_channels = {2, 3};
    EmbeddingModel m(c);
    m.init(rng);
    const Image a = random_image(rng, 6, 6, 3), p = random_image(rng, 6, 6, 3), n = random_image(rng, 6, 6, 3);
    const Triplet t{std::cref(a), std::cref(p), std::cref(n)};
    const double alpha = 2.5;  // keeps the hinge active
    Vec g;
    loss_total(t, m, alpha, &g);
    const auto f = [&](const Vec& x) {
      EmbeddingModel mm = m;
      mm.params() = x;
      return loss_total(t, mm, alpha);
    };
    errs.emplace_back("loss_total", max_rel_error(g, fd_gradient(f, m.params())));
  }

  const int k = 2, d = 3, ma = 2, n = 6;
  DynamicsModel dyn({.stack = k, .latent_dim = d, .action_dim = ma, .hidden = {8, 8}});
  dyn.init(rng);
  {
    Mat Z(k * d, n), A(ma, n), T(d, n);
    for (int i = 0; i < n; ++i) {
      Z.col(i) = unit_blocks(rng, k, d);
      A.col(i) = normal_vec(rng, ma);
      T.col(i) = unit_blocks(rng, 1, d);
    }
    Vec g;
    loss_dynamics(Z, A, T, dyn, &g);
    const auto f = [&](const Vec& x) {
      DynamicsModel dd = dyn;
      dd.params() = x;
      return loss_dynamics(Z, A, T, dd);
    };
    errs.emplace_back("loss_dynamics", max_rel_error(g, fd_gradient(f, dyn.params())));
  }

  ReplayBuffer buf(n);
  for (int i = 0; i < n; ++i)
    buf.push({unit_blocks(rng, k, d), Vec::NullaryExpr(ma, [&] { return uniform(rng, -1.0, 1.0); }), normal(rng),
              unit_blocks(rng, k, d), i % 3 == 0});
  TransitionBatch batch;
  for (std::size_t i = 0; i < buf.size(); ++i) batch.push_back(&buf.at(i));
  const BatchTensors bt(batch);

  for (auto kind : {CriticKind::Q, CriticKind::V}) {
    AgentConfig ac;
    ac.critic = kind;
    ac.stack = k;
    ac.latent_dim = d;
    ac.action_dim = ma;
    ac.box = ActionBox::uniform(ma, -1.0, 1.0);
    ac.hidden = {8, 8};
    ac.final_layer_init = 0.3;
    Agent ag(ac);
    ag.init(rng);
    Agent other(ac);
    other.init(rng);
    ag.actor_target() = other.actor();
    ag.critic_target() = other.critic();

    Vec gc, ga;
    const bool q = kind == CriticKind::Q;
    const auto critic_loss = [&](const Agent& a, Vec* g) {
      return q ? loss_critic_q(batch, a, g) : loss_critic_v(batch, a, dyn, g);
    };
    const auto actor_loss = [&](const Agent& a, Vec* g) {
      return q ? loss_actor_q(bt.z, a, g) : loss_actor_v(bt.z, a, dyn, g);
    };
    critic_loss(ag, &gc);
    actor_loss(ag, &ga);
    const auto fc = [&](const Vec& x) {
      Agent a2 = ag;
      a2.critic().params() = x;
      return critic_loss(a2, nullptr);
    };
    const auto fa = [&](const Vec& x) {
      Agent a2 = ag;
      a2.actor().params() = x;
      return actor_loss(a2, nullptr);
    };
    errs.emplace_back(q ? "loss_critic_q" : "loss_critic_v", max_rel_error(gc, fd_gradient(fc, ag.critic().params())));
    errs.emplace_back(q ? "loss_actor_q" : "loss_actor_v", max_rel_error(ga, fd_gradient(fa, ag.actor().params())));
  }

  {
    nn::Mlp qnet({k * d + ma, 8, 1}), vnet({k * d, 8, 1}), rnet({k * d, 8, 1});
    qnet.init(rng, 0.5);
    vnet.init(rng, 0.5);
    rnet.init(rng, 0.5);
    const NetworkDynamics step(dyn);
    const NetworkReward reward(rnet);
    const int H = 3;
    const Vec z0 = unit_blocks(rng, k, d);
    const Vec w = Vec::NullaryExpr(H + 1, [&] { return uniform(rng, 0.1, 1.0); });
    std::vector<Vec> plan0;
    for (int j = 0; j <= H; ++j) plan0.push_back(Vec::NullaryExpr(ma, [&] { return uniform(rng, -1.0, 1.0); }));
    const Vec x0 = detail::flatten_actions(plan0);
    const auto check = [&](const std::string& name, auto&& obj) {
      const ObjectiveValue v = obj(plan0);
      const auto f = [&](const Vec& x) { return obj(detail::split_actions(x, ma)).value; };
      errs.emplace_back(name, max_rel_error(detail::flatten_actions(v.grad), fd_gradient(f, x0)));
    };
    check("q_sum[Q]", [&](const std::vector<Vec>& a) { return objective_q_sum(a, z0, QCritic(qnet), step, w); });
    check("q_sum[V]", [&](const std::vector<Vec>& a) { return objective_q_sum(a, z0, VCritic(vnet, dyn), step, w); });
    check("r_plus_q", [&](const std::vector<Vec>& a) {
      return objective_r_plus_q(a, z0, &reward, QCritic(qnet), step, w);
    });
    check("terminal_q", [&](const std::vector<Vec>& a) { return objective_terminal_q(a, z0, QCritic(qnet), step); });
  }

  Outcome out{true, ""};
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, e] : errs) {
    if (!(e <= tol)) out.pass = false;
    if (!(e <= worst)) worst = e, worst_name = name;
  }
  out.detail = std::to_string(errs.size()) + " gradients, worst " + worst_name + " " + fmt("%.2e", worst) +
               " (tol 1e-3)";
  if (!out.pass) {
    for (const auto& [name, e] : errs)
      if (!(e <= tol)) out.detail += "; " + name + " " + fmt("%.2e", e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2. Exact invariants

Outcome invariants() {
  Rng rng(202);
  std::vector<std::string> failures;

  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 3, d = 2 + trial % 5, m = 1 + trial % 2;
    DynamicsModel dyn({.stack = k, .latent_dim = d, .action_dim = m, .hidden = {8}});
    dyn.init(rng);
    const Vec z = unit_blocks(rng, k, d);
    const Vec next = dyn.predict(z, normal_vec(rng, m));
    for (int i = 0; i < (k - 1) * d; ++i)
      if (next[i] != z[i + d]) {
        failures.push_back("rotation");
        break;
      }
  }

  for (int trial = 0; trial < 20; ++trial) {
    const Vec a = normal_vec(rng, 50), b = normal_vec(rng, 50);
    if (soft_update(a, b, 0.0) != b || soft_update(a, b, 1.0) != a ||
        soft_update(a, b, 0.5) != Vec(0.5 * a + (1.0 - 0.5) * b))
      failures.push_back("soft_update");
  }

  {
    EmbeddingConfig c;
    c.height = 64;
    c.width = 64;
    c.channels = 3;
    c.latent_dim = 20;
    c.conv_channels = {4, 8, 16, 16};
    EmbeddingModel m(c);
    m.init(rng);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, std::abs(m.encode(random_image(rng, 64, 64, 3)).norm() - 1.0));
    if (worst > 1e-6) failures.push_back("unit norm " + fmt("%.1e", worst));
  }

  int plans = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int H = 1 + trial % 5;
    DynamicsModel dyn({.stack = 2, .latent_dim = 3, .action_dim = 2, .hidden = {8}});
    dyn.init(rng);
    nn::Mlp qnet({8, 8, 1}), vnet({6, 8, 1});
    qnet.init(rng, 0.5);
    vnet.init(rng, 0.5);
    const NetworkDynamics step(dyn);
    const Vec z0 = unit_blocks(rng, 2, 3);
    std::vector<Vec> a;
    for (int j = 0; j <= H; ++j) a.push_back(Vec::NullaryExpr(2, [&] { return uniform(rng, -1.0, 1.0); }));
    Vec onehot = Vec::Zero(H + 1);
    onehot[H] = 1.0;
    const auto t = objective_terminal_q(a, z0, QCritic(qnet), step);
    const auto s = objective_q_sum(a, z0, QCritic(qnet), step, onehot);
    bool same = t.value == s.value;
    for (int j = 0; j <= H; ++j) same = same && t.grad[j] == s.grad[j];
    if (!same) failures.push_back("terminal_q vs one-hot q_sum");

    PlanProblem pr;
    pr.z0 = z0;
    pr.horizon = H;
    pr.box = ActionBox(Vec(Eigen::Vector2d(-1.0, -0.5)), Vec(Eigen::Vector2d(0.5, 1.0)));
    pr.objective = static_cast<ObjectiveKind>(trial % 2 == 0 ? 0 : 2);
    const auto actor = [&](const Vec& z) { return Vec(z.head(2) * 3.0); };
    const auto r = trial % 3 == 0 ? plan(pr, actor, VCritic(vnet, dyn), step) : plan(pr, actor, QCritic(qnet), step);
    for (const auto& act : r.actions)
      if (!pr.box.contains(act)) failures.push_back("plan outside box");
    if (!(r.final_value >= r.initial_value - 1e-9)) failures.push_back("plan final < initial");
    ++plans;
  }

  Outcome out;
  out.pass = failures.empty();
  out.detail = "50 rotations, 60 soft updates, 20 encodings, 40 one-hot objectives, " + std::to_string(plans) + " plans";
  if (!out.pass) out.detail += "; first failure: " + failures.front();
  return out;
}

// ---------------------------------------------------------------------------
// 3. Planner against the analytic optimum and an exhaustive grid

// Closed form of QuadraticPlan::objective for the grid search.
double quadratic_value(const QuadraticPlan& qp, double a0, double a1, double a2) {
  const auto& c = qp.critic;
  const double s0 = a0, s1 = a0 + a1, s2 = a0 + a1 + a2;
  const double w = 1.0 / qp.problem.horizon;
  auto term = [&](double s, double a) { return -c.c * (s - c.goal) * (s - c.goal) - c.p * a * a; };
  return c.scale * w * (term(s0, a0) + term(s1, a1) + term(s2, a2));
}

Outcome planner_oracle() {
  const QuadraticPlan qp;
  const Vec opt = qp.analytic_optimum();
  const auto r = qp.solve();
  double dev = 0.0;
  for (int j = 0; j < 3; ++j) dev = std::max(dev, std::abs(r.actions[j][0] - opt[j]));

  double closed_form_err = 0.0;
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const double a0 = uniform(rng, -1, 1), a1 = uniform(rng, -1, 1), a2 = uniform(rng, -1, 1);
    closed_form_err = std::max(closed_form_err, std::abs(quadratic_value(qp, a0, a1, a2) - qp.objective(a0, a1, a2)));
  }

  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 200; ++i)
    for (int j = 0; j <= 200; ++j)
      for (int l = 0; l <= 200; ++l)
        best = std::max(best, quadratic_value(qp, -1.0 + 0.01 * i, -1.0 + 0.01 * j, -1.0 + 0.01 * l));

  Outcome out;
  out.pass = dev <= 1e-4 && r.final_value >= best - 1e-4 && closed_form_err < 1e-12;
  out.detail = "max |a - a*| " + fmt("%.2e", dev) + " (tol 1e-4), planner " + fmt("%.8f", r.final_value) + " vs grid " +
               fmt("%.8f", best);
  return out;
}

// ---------------------------------------------------------------------------
// 4. Scale equivariance

Outcome scale_equivariance() {
  const double c = 7.3;
  const QuadraticPlan base(1.0), scaled(c);
  Rng rng(4);
  double rel = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double a0 = uniform(rng, -1, 1), a1 = uniform(rng, -1, 1), a2 = uniform(rng, -1, 1);
    const double v1 = base.objective(a0, a1, a2), vc = scaled.objective(a0, a1, a2);
    rel = std::max(rel, std::abs(vc - c * v1) / std::max(std::abs(c * v1), 1e-300));
  }
  const auto r1 = base.solve(), rc = scaled.solve();
  double dev = 0.0;
  for (int j = 0; j < 3; ++j) dev = std::max(dev, std::abs(r1.actions[j][0] - rc.actions[j][0]));
  Outcome out;
  out.pass = rel <= 1e-12 && dev <= 1e-6;
  out.detail = "objective rel err " + fmt("%.1e", rel) + " (tol 1e-12), action shift " + fmt("%.1e", dev) + " (tol 1e-6)";
  return out;
}

// ---------------------------------------------------------------------------
// 5. OU stationary statistics

Outcome ou_statistics() {
  const OUConfig c{.theta = 0.15, .sigma = 0.5, .dt = 1.0, .mu = 0.0};
  OUProcess p(1, c);
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) p.step(rng);
  const int n = 1000000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = p.step(rng)[0];
    s += x;
    ss += x * x;
  }
  const double mean = s / n;
  const double sd = std::sqrt(ss / n - mean * mean);
  const double exact = ou_stationary_std(c);
  const double rel = std::abs(sd - exact) / exact;
  return {rel <= 0.05, "empirical std " + fmt("%.4f", sd) + " vs exact " + fmt("%.4f", exact) + " (" +
                           fmt("%.2f", 100.0 * rel) + "%, tol 5%)"};
}

// ---------------------------------------------------------------------------
// 6. One-state quadratic bandit, r = -a^2

Vec circle(double s) { return Vec(Eigen::Vector2d(std::cos(s), std::sin(s))); }

AgentConfig bandit_agent(CriticKind kind) {
  AgentConfig c;
  c.critic = kind;
  c.stack = 1;
  c.latent_dim = 2;
  c.action_dim = 1;
  c.box = ActionBox::uniform(1, -1.0, 1.0);
  c.hidden = {32, 32};
  c.batch = 128;
  c.tau = 0.05;
  c.gamma = 0.9;
  c.actor_lr = 1e-3;
  c.critic_lr = 3e-3;
  return c;
}

// Q: every transition is (z0, a, -a^2, z0, terminal). V: the action picks the
// successor state circle(a), whose value carries the reward -a^2; the start
// state z0 = circle(pi) lies outside that arc.
double bandit_policy(CriticKind kind, std::uint64_t seed) {
  Rng rng(seed);
  Agent agent(bandit_agent(kind));
  agent.init(rng);
  agent.actor().bias(agent.actor().num_layers() - 1)[0] += std::atanh(0.6);  // start far from the optimum
  agent.actor_target() = agent.actor();
  const Vec z0 = circle(std::acos(-1.0));

  ReplayBuffer buffer(4000);
  std::optional<DynamicsModel> dyn;
  if (kind == CriticKind::Q) {
    for (int i = 0; i < 1000; ++i) {
      const double a = uniform(rng, -1.0, 1.0);
      buffer.push({z0, Vec::Constant(1, a), -a * a, z0, true});
    }
  } else {
    std::vector<DynamicsSample> samples;
    for (int i = 0; i < 1000; ++i) {
      const double a = uniform(rng, -1.0, 1.0), a2 = uniform(rng, -1.0, 1.0);
      buffer.push({z0, Vec::Constant(1, a), 0.0, circle(a), false});
      buffer.push({circle(a), Vec::Constant(1, a2), -a * a, circle(a2), true});
      samples.push_back({z0, Vec::Constant(1, a), circle(a)});
      samples.push_back({circle(a), Vec::Constant(1, a2), circle(a2)});
    }
    dyn = train_dynamics(samples, {.stack = 1, .latent_dim = 2, .action_dim = 1, .hidden = {32, 32}},
                         {.steps = 10000, .batch = 64, .lr = 3e-3, .seed = seed});
  }
  for (int i = 0; i < 2000; ++i) train_step(buffer, agent, dyn ? &*dyn : nullptr, rng);
  return agent.act(z0)[0];
}

Outcome bandit() {
  Outcome out{true, ""};
  for (auto kind : {CriticKind::Q, CriticKind::V}) {
    int ok = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const double a = bandit_policy(kind, seed);
      worst = std::max(worst, std::abs(a));
      ok += std::abs(a) <= 0.05 ? 1 : 0;
    }
    out.pass = out.pass && ok == 5;
    out.detail += (out.detail.empty() ? "" : ", ") + to_string(kind) + ": " + std::to_string(ok) + "/5 (max |pi| " +
                  fmt("%.3f", worst) + ")";
  }
  return out;
}

// ---------------------------------------------------------------------------
// 7 and 8. Desk-scale runs

struct MethodRuns {
  std::vector<double> best_explore, best_eval, mean_reward;
  std::vector<fs::path> dirs;
};

MethodRuns run_method(harness::ExperimentConfig c, const fs::path& root, int window) {
  MethodRuns m;
  for (const auto seed : c.seeds) {
    const auto dir = root / c.method_label() / ("seed_" + std::to_string(seed));
    fs::remove_all(dir);
    const auto r = harness::run_experiment(c, seed, dir);
    if (!r.ok) throw std::runtime_error(c.method_label() + " seed " + std::to_string(seed) + ": " + r.error);
    const auto recs = harness::read_metrics(dir / "metrics.jsonl");
    const auto ex = harness::filter_stream(recs, "explore");
    const auto ev = harness::filter_stream(recs, "eval");
    double total = 0.0;
    for (const auto& e : ex) total += e.reward;
    m.mean_reward.push_back(total / static_cast<double>(ex.size()));
    if (static_cast<int>(ex.size()) >= window) {
      m.best_explore.push_back(harness::best_window_rate(harness::success_flags(ex), window));
      if (static_cast<int>(ev.size()) >= window)
        m.best_eval.push_back(harness::best_window_rate(harness::success_flags(ev), window));
    }
    m.dirs.push_back(dir);
  }
  return m;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string list(const std::vector<double>& v, const char* f) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(f, x);
  return "[" + s + "]";
}

harness::ExperimentConfig with_pretraining(const fs::path& config, const fs::path& root) {
  auto c = harness::load_config(config);
  c.timing = true;
  const auto pre = root / "pretrained";
  if (!fs::exists(pre / "dynamics.ckpt")) harness::pretrain(c, c.seeds.front(), pre);
  c.pretrained_dir = pre.string();
  return c;
}

void write_report(const std::vector<fs::path>& dirs, const fs::path& out, int window) {
  try {
    harness::report(dirs, out, window);
  } catch (const std::exception& e) {
    std::cerr << "report: " << e.what() << "\n";
  }
}

Outcome sparse_task(const fs::path& out_root) {
  const fs::path root = out_root / "peg2d";
  auto c = with_pretraining(fs::path(LTO_CONFIG_DIR) / "peg2d_desk.json", root);
  c.critic = CriticKind::V;
  c.explorer = ExplorerKind::TrajOpt;
  c.horizon = 3;
  const auto trajopt = run_method(c, root, 50);
  c.explorer = ExplorerKind::Ou;
  const auto ou = run_method(c, root, 50);

  std::vector<fs::path> dirs = trajopt.dirs;
  dirs.insert(dirs.end(), ou.dirs.begin(), ou.dirs.end());
  write_report(dirs, root / "report", 50);

  int above = 0;
  for (double b : trajopt.best_explore) above += b >= 0.8 ? 1 : 0;
  const double mt = mean_of(trajopt.best_explore), mo = mean_of(ou.best_explore);
  Outcome out;
  out.pass = above >= 4 && mt >= mo;
  out.detail = "trajopt explore best-50 " + list(trajopt.best_explore, "%.2f") + " (" + std::to_string(above) +
               "/5 >= 0.80, mean " + fmt("%.3f", mt) + ") vs ou " + list(ou.best_explore, "%.2f") + " (mean " +
               fmt("%.3f", mo) + "); eval stream trajopt " + fmt("%.3f", mean_of(trajopt.best_eval)) + " ou " +
               fmt("%.3f", mean_of(ou.best_eval));
  return out;
}

Outcome dense_task(const fs::path& out_root) {
  const fs::path root = out_root / "runner";
  auto c = with_pretraining(fs::path(LTO_CONFIG_DIR) / "runner_desk.json", root);
  c.explorer = ExplorerKind::TrajOpt;
  c.objective = ObjectiveKind::QSum;
  c.horizon = 10;
  const auto trajopt = run_method(c, root, 50);
  c.explorer = ExplorerKind::Ou;
  const auto ou = run_method(c, root, 50);

  std::vector<fs::path> dirs = trajopt.dirs;
  dirs.insert(dirs.end(), ou.dirs.begin(), ou.dirs.end());
  write_report(dirs, root / "report", 50);

  const double mt = mean_of(trajopt.mean_reward), mo = mean_of(ou.mean_reward);
  Outcome out;
  out.pass = c.seeds.size() >= 10 && mt > mo;
  out.detail = std::to_string(c.seeds.size()) + " seeds, mean explore reward over episodes 1-" +
               std::to_string(c.episodes) + ": trajopt " + fmt("%.1f", mt) + " vs ou " + fmt("%.1f", mo);
  return out;
}

// ---------------------------------------------------------------------------
// 9. Reporting fidelity

Outcome reporting() {
  Rng rng(9);
  int mismatches = 0;
  for (int set = 0; set < 100; ++set) {
    const int runs = 1 + static_cast<int>(uniform_index(rng, 5));
    const int window = 1 + static_cast<int>(uniform_index(rng, 60));
    const double p = uniform(rng, 0.05, 0.95);
    std::vector<std::vector<bool>> exps;
    double oracle_sum = 0.0;
    for (int r = 0; r < runs; ++r) {
      const int n = window + static_cast<int>(uniform_index(rng, 300));
      std::vector<bool> s(static_cast<std::size_t>(n));
      for (auto&& b : s) b = uniform(rng, 0.0, 1.0) < p;
      int best = 0;
      for (int i = 0; i + window <= n; ++i) {
        int cnt = 0;
        for (int j = i; j < i + window; ++j) cnt += s[static_cast<std::size_t>(j)] ? 1 : 0;
        best = std::max(best, cnt);
      }
      oracle_sum += static_cast<double>(best) / window;
      exps.push_back(std::move(s));
    }
    const auto summary = harness::success_rate(exps, window);
    if (std::abs(summary.mean - oracle_sum / runs) > 1e-12) ++mismatches;
  }

  double sg_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int half = 1 + trial % 12;
    const int w = 2 * half + 1;
    std::vector<double> y(static_cast<std::size_t>(w + 50 + trial));
    for (auto& v : y) v = normal(rng, 0.0, 3.0);
    const auto s = harness::smooth(y, w, 1);
    for (std::size_t i = static_cast<std::size_t>(half); i + static_cast<std::size_t>(half) < y.size(); ++i) {
      double avg = 0.0;
      for (std::size_t j = i - half; j <= i + half; ++j) avg += y[j];
      avg /= w;
      sg_err = std::max(sg_err, std::abs(s[i] - avg));
    }
  }
  Outcome out;
  out.pass = mismatches == 0 && sg_err <= 1e-12;
  out.detail = std::to_string(100 - mismatches) + "/100 record sets match the exhaustive oracle; SG vs moving average " +
               fmt("%.1e", sg_err) + " (tol 1e-12)";
  return out;
}

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string out = "acceptance_runs";
  app.add_option("--only", only, "Criteria to run (default: all)");
  std::string summary;
  app.add_option("--out", out, "Directory for training runs")->capture_default_str();
  app.add_option("--summary", summary, "Also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);

  const fs::path out_root = out;
  const std::vector<Criterion> criteria{
      {1, "gradient oracle suite", 120, gradient_suite},
      {2, "exact invariants", 0, invariants},
      {3, "planner vs analytic and grid oracle", 10, planner_oracle},
      {4, "scale equivariance", 0, scale_equivariance},
      {5, "OU stationary std", 0, ou_statistics},
      {6, "bandit convergence", 120, bandit},
      {7, "peg2d trajopt vs OU success rate", 1800, [&] { return sparse_task(out_root); }},
      {8, "runner trajopt vs OU exploration reward", 1200, [&] { return dense_task(out_root); }},
      {9, "reporting fidelity", 0, reporting},
  };

  std::ofstream summary_file;
  if (!summary.empty()) summary_file.open(summary);
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1fs", secs);
    if (c.budget_seconds > 0) {
      timing += " of " + fmt("%.0fs", c.budget_seconds);
      if (secs > c.budget_seconds) {
        o.pass = false;
        timing += " OVER BUDGET";
      }
    }
    if (!o.pass) ++failed;
    std::ostringstream line;
    line << "criterion " << c.id << " " << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail << " ["
         << timing << "]";
    std::cout << line.str() << std::endl;
    if (summary_file.is_open()) summary_file << line.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
