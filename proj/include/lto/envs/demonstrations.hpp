#pragma once

#include <algorithm>
#include <concepts>
#include <deque>
#include <string>

#include "lto/agent.hpp"
#include "lto/dataset.hpp"
#include "lto/embedding.hpp"
#include "lto/envs/peg2d.hpp"
#include "lto/envs/runner.hpp"

namespace lto::envs {

struct DemoConfig {
  int n_total = 50;
  int n_positive = 19;
  double controller_noise = 0.01;
  int max_retries = 200;
  int max_steps = 0;  // 0 keeps the full episode length
};

/// Records one episode driven by policy(state info, rng) -> action.
template <class Policy>
Episode record_episode(Environment& env, Policy&& policy, Rng& rng, int max_steps = 0) {
  Episode ep;
  StepResult s = env.reset(rng);
  ep.frames.push_back(s.observation);
  int steps = 0;
  while (!s.done && (max_steps <= 0 || steps < max_steps)) {
    const Vec a = env.spec().box.clamp(policy(s.info, rng));
    s = env.step(a);
    ep.frames.push_back(s.observation);
    ep.actions.push_back(a);
    ep.rewards.push_back(s.reward);
    ep.success = ep.success || s.info.success;
    ++steps;
  }
  return ep;
}

/// Straight-line insertion: centre over the slot, then push down. Gaussian
/// noise is added before clipping.
inline Vec peg2d_scripted_action(const Peg2d& env, const Vec& pos, Rng& rng, double noise) {
  const auto& cfg = env.config();
  const double step = cfg.max_step;
  const double ex = cfg.slot_center - pos[0];
  Vec a(2);
  a[0] = std::clamp(ex, -step, step);
  const bool aligned = std::abs(ex) < 0.25 * cfg.slot_width;
  const bool above_block = pos[1] > cfg.slot_depth + step;
  a[1] = (aligned || above_block) ? -step : 0.0;
  a[0] += normal(rng, 0.0, noise);
  a[1] += normal(rng, 0.0, noise);
  return env.spec().box.clamp(a);
}

inline Dataset generate_demonstrations(Peg2d& env, const DemoConfig& cfg, Rng& rng) {
  require(cfg.n_total >= 0 && cfg.n_positive >= 0 && cfg.n_positive <= cfg.n_total,
          "demonstrations: need 0 <= n_positive <= n_total");
  Dataset ds;
  auto scripted = [&](const StepInfo& info, Rng& r) {
    return peg2d_scripted_action(env, info.true_state, r, cfg.controller_noise);
  };
  auto random_walk = [&](const StepInfo&, Rng& r) {
    const ActionBox& box = env.spec().box;
    Vec a(box.dim());
    for (int i = 0; i < box.dim(); ++i) a[i] = uniform(r, box.lo[i], box.hi[i]);
    return a;
  };
  for (int i = 0; i < cfg.n_total; ++i) {
    const bool positive = i < cfg.n_positive;
    int attempt = 0;
    for (;; ++attempt) {
      require(attempt <= cfg.max_retries,
               positive ? "demonstrations: scripted controller failed beyond the retry budget"
                        : "demonstrations: could not produce a failing random-walk episode");
      Episode ep = positive ? record_episode(env, scripted, rng, cfg.max_steps)
                            : record_episode(env, random_walk, rng, cfg.max_steps);
      if (ep.success == positive) {
        ds.episodes.push_back(std::move(ep));
        break;
      }
    }
  }
  std::shuffle(ds.episodes.begin(), ds.episodes.end(), rng);
  return ds;
}

/// Smoothly varying random actions; the runner has no success notion, so
/// n_positive must be zero.
inline Dataset generate_demonstrations(Runner& env, const DemoConfig& cfg, Rng& rng) {
  require(cfg.n_positive == 0, "demonstrations: the runner has no success episodes; n_positive must be 0");
  require(cfg.n_total >= 0, "demonstrations: n_total must be non-negative");
  Dataset ds;
  for (int i = 0; i < cfg.n_total; ++i) {
    double u = uniform(rng, -1.0, 1.0);
    auto smooth = [&u](const StepInfo&, Rng& r) {
      u = std::clamp(0.9 * u + 0.3 * normal(r), -1.0, 1.0);
      return Vec::Constant(1, u);
    };
    ds.episodes.push_back(record_episode(env, smooth, rng, cfg.max_steps));
  }
  return ds;
}

/// Keeps the k most recent frame embeddings; the stacked state lists them
/// oldest first so the newest embedding occupies the last d rows.
class FrameStacker {
 public:
  explicit FrameStacker(int k = 1) : k_(k) { require(k >= 1, "frame stacker: k must be at least 1"); }

  void reset(const Latent& z) {
    frames_.assign(k_, z);
  }
  void push(const Latent& z) {
    require(!frames_.empty(), "frame stacker: push() before reset()");
    frames_.pop_front();
    frames_.push_back(z);
  }
  StackedLatent stacked() const {
    require(!frames_.empty(), "frame stacker: stacked() before reset()");
    const Eigen::Index d = frames_.front().size();
    StackedLatent out(d * k_);
    for (int i = 0; i < k_; ++i) out.segment(i * d, d) = frames_[i];
    return out;
  }
  int k() const { return k_; }

 private:
  int k_;
  std::deque<Latent> frames_;
};

/// Encodes an episode into stacked-latent transitions. The last transition is
/// terminal when the episode succeeded or left the workspace.
template <class Encode>
std::vector<Transition> episode_transitions(const Episode& ep, Encode&& encode, int stack) {
  std::vector<Transition> out;
  if (ep.steps() == 0) return out;
  FrameStacker fs(stack);
  fs.reset(encode(ep.frames[0]));
  for (std::size_t t = 0; t < ep.steps(); ++t) {
    Transition tr;
    tr.z = fs.stacked();
    fs.push(encode(ep.frames[t + 1]));
    tr.z_next = fs.stacked();
    tr.a = ep.actions[t];
    tr.r = ep.rewards[t];
    const bool last = t + 1 == ep.steps();
    tr.done = last && (ep.success || tr.r <= -1.0);
    out.push_back(std::move(tr));
  }
  return out;
}

/// Inserts the first n_seed successful episodes of the dataset, re-indexed
/// with state_reward_transitions when state_rewards is set.
template <class Encode>
  requires std::invocable<Encode&, const Image&>
void seed_replay(ReplayBuffer& buffer, const Dataset& ds, int n_seed, Encode&& encode, int stack,
                 bool state_rewards = false) {
  require(n_seed >= 0, "seed_replay: n_seed must be non-negative");
  require(static_cast<int>(ds.num_positive()) >= n_seed,
          "seed_replay: dataset has " + std::to_string(ds.num_positive()) + " positive episodes, " +
              std::to_string(n_seed) + " requested");
  int used = 0;
  for (const auto& ep : ds.episodes) {
    if (used == n_seed) break;
    if (!ep.success) continue;
    auto trs = episode_transitions(ep, encode, stack);
    if (state_rewards) trs = state_reward_transitions(trs);
    for (auto& tr : trs) buffer.push(std::move(tr));
    ++used;
  }
}

inline void seed_replay(ReplayBuffer& buffer, const Dataset& ds, int n_seed, const EmbeddingModel& model,
                        int stack, bool state_rewards = false) {
  seed_replay(buffer, ds, n_seed, [&model](const Image& im) { return model.encode(im); }, stack, state_rewards);
}

}  // namespace lto::envs
