#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lto/agent.hpp"
#include "lto/dataset.hpp"
#include "lto/dynamics.hpp"
#include "lto/embedding.hpp"
#include "lto/envs/demonstrations.hpp"
#include "lto/exploration.hpp"
#include "lto/harness/config.hpp"
#include "lto/harness/metrics.hpp"
#include "lto/io/checkpoint.hpp"

namespace lto::harness {

namespace fs = std::filesystem;

// Independent random streams of one replica.
enum SeedTag : std::uint64_t {
  kTagDemos = 1,
  kTagEmbedding,
  kTagDynamics,
  kTagAgent,
  kTagEnv,
  kTagEvalEnv,
  kTagExplore,
  kTagTrain,
  kTagReward,
};

inline std::unique_ptr<envs::Environment> make_env(const ExperimentConfig& c) {
  if (c.env == "peg2d") return std::make_unique<envs::Peg2d>(c.peg2d);
  if (c.env == "runner") return std::make_unique<envs::Runner>(c.runner);
  throw ConfigError("config: unknown env '" + c.env + "'");
}

inline Dataset make_demonstrations(const ExperimentConfig& c, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kTagDemos));
  if (c.env == "peg2d") {
    envs::Peg2d env(c.peg2d);
    return envs::generate_demonstrations(env, c.demos, rng);
  }
  envs::Runner env(c.runner);
  return envs::generate_demonstrations(env, c.demos, rng);
}

inline EmbeddingConfig embedding_config(const ExperimentConfig& c) {
  EmbeddingConfig e;
  const bool peg = c.env == "peg2d";
  e.height = e.width = peg ? c.peg2d.image_size : c.runner.image_size;
  e.channels = peg ? c.peg2d.channels : c.runner.channels;
  e.latent_dim = c.embedding.latent_dim;
  e.conv_channels = c.embedding.conv_channels;
  e.alpha = c.embedding.alpha;
  return e;
}

inline std::vector<Latent> encode_frames(const std::vector<Image>& frames, const EmbeddingModel& model) {
  std::vector<Latent> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(model.encode(f));
  return out;
}

/// Stacked-latent one-step samples of every demonstration transition.
inline std::vector<DynamicsSample> dynamics_samples(const Dataset& ds, const EmbeddingModel& model, int stack) {
  std::vector<DynamicsSample> out;
  for (const auto& ep : ds.episodes) {
    if (ep.steps() == 0) continue;
    const auto z = encode_frames(ep.frames, model);
    envs::FrameStacker fs(stack);
    fs.reset(z[0]);
    for (std::size_t t = 0; t < ep.steps(); ++t) {
      DynamicsSample s;
      s.z = fs.stacked();
      s.a = ep.actions[t];
      s.z_next = z[t + 1];
      fs.push(z[t + 1]);
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct Pretrained {
  Dataset demos;
  EmbeddingModel embedding;
  DynamicsModel dynamics;
};

inline DynamicsConfig dynamics_config(const ExperimentConfig& c, const envs::EnvSpec& spec) {
  return {spec.frame_stack, c.embedding.latent_dim, spec.action_dim, c.dynamics.hidden};
}

/// Demonstrations, then the embedding on their frames, then the dynamics on
/// their encoded transitions. Artifacts go to `dir` when it is non-empty.
inline Pretrained pretrain(const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir) {
  const auto env = make_env(c);
  Pretrained p;
  p.demos = make_demonstrations(c, seed);
  if (!dir.empty()) save_dataset(dir / "demos", p.demos);
  require(!p.demos.empty(), "pretrain: no demonstration frames (demos.n_total is 0)");
  EmbeddingTrainConfig et{c.embedding.epochs, c.embedding.batch, c.embedding.lr, derive_seed(seed, kTagEmbedding)};
  p.embedding = train_embedding(p.demos, embedding_config(c), et);
  if (!dir.empty()) io::save_checkpoint(dir / "embedding.ckpt", p.embedding.to_checkpoint());
  const auto samples = dynamics_samples(p.demos, p.embedding, env->spec().frame_stack);
  Rng rng(derive_seed(seed, kTagDynamics));
  p.dynamics = DynamicsModel(dynamics_config(c, env->spec()));
  p.dynamics.init(rng);
  if (!samples.empty()) {
    nn::Adam opt(p.dynamics.network().num_params(), {.lr = c.dynamics.lr});
    fit_dynamics(p.dynamics, opt, samples, c.dynamics.pretrain_steps, c.dynamics.batch, rng);
  }
  if (!dir.empty()) io::save_checkpoint(dir / "dynamics.ckpt", p.dynamics.to_checkpoint());
  return p;
}

inline Pretrained load_pretrained(const fs::path& dir) {
  Pretrained p;
  p.demos = load_dataset(dir / "demos");
  p.embedding = EmbeddingModel::from_checkpoint(io::load_checkpoint(dir / "embedding.ckpt"));
  p.dynamics = DynamicsModel::from_checkpoint(io::load_checkpoint(dir / "dynamics.ckpt"));
  return p;
}

/// Supervised latent reward model r(z') used by the r_plus_q objective.
class LatentRewardModel {
 public:
  LatentRewardModel(int state_dim, const RewardModelSettings& s, Rng& rng)
      : settings_(s), net_(nn::layer_sizes(state_dim, s.hidden, 1)) {
    net_.init(rng);
    opt_ = nn::Adam(net_.num_params(), {.lr = s.lr});
  }

  const nn::Mlp& network() const { return net_; }

  /// Mean squared error on (z_next, r) pairs drawn from the buffer, or on
  /// (z, r) pairs when the buffer holds state rewards.
  double fit(const ReplayBuffer& buffer, int steps, Rng& rng, bool state_rewards = false) {
    double loss = 0.0;
    if (buffer.empty()) return loss;
    const auto b = static_cast<std::size_t>(settings_.batch);
    for (int s = 0; s < steps; ++s) {
      const auto batch = buffer.sample(b, rng);
      Mat Z(batch.front()->z_next.size(), static_cast<Eigen::Index>(b));
      Mat R(1, static_cast<Eigen::Index>(b));
      for (std::size_t i = 0; i < b; ++i) {
        Z.col(static_cast<Eigen::Index>(i)) = state_rewards ? batch[i]->z : batch[i]->z_next;
        R(0, static_cast<Eigen::Index>(i)) = batch[i]->r;
      }
      nn::Mlp::Tape tape;
      const Mat diff = net_.forward(Z, tape) - R;
      loss = diff.squaredNorm() / static_cast<double>(b);
      Vec g = Vec::Zero(net_.num_params());
      net_.backward(tape, 2.0 * diff / static_cast<double>(b), &g);
      if (!std::isfinite(loss) || !g.allFinite()) throw DivergenceError("reward model: non-finite loss");
      opt_.step(net_.params(), g);
    }
    return loss;
  }

  io::Checkpoint to_checkpoint() const {
    io::Checkpoint ck;
    ck.header = {{"kind", "reward"}, {"sizes", net_.sizes()}};
    ck.add_flat("reward.", net_.params(), net_.layout());
    return ck;
  }

 private:
  RewardModelSettings settings_;
  nn::Mlp net_;
  nn::Adam opt_;
};

inline AgentConfig agent_config(const ExperimentConfig& c, const envs::EnvSpec& spec) {
  AgentConfig a;
  a.critic = c.critic;
  a.stack = spec.frame_stack;
  a.latent_dim = c.embedding.latent_dim;
  a.action_dim = spec.action_dim;
  a.box = spec.box;
  a.hidden = c.agent.hidden;
  a.gamma = c.agent.gamma;
  a.tau = c.agent.tau;
  a.batch = c.agent.batch;
  a.capacity = c.agent.capacity;
  a.critic_lr = c.agent.critic_lr;
  a.actor_lr = c.agent.actor_lr;
  a.final_layer_init = c.agent.final_layer_init;
  return a;
}

struct EpisodeOutcome {
  double reward = 0.0;
  bool success = false;
  int steps = 0;
};

/// Sinks for what an exploration episode produces; all optional.
struct EpisodeSinks {
  ReplayBuffer* buffer = nullptr;
  std::vector<DynamicsSample>* dynamics = nullptr;
  std::ofstream* traces = nullptr;
  int episode = 0;
};

inline EpisodeOutcome run_episode(envs::Environment& env, Rng& env_rng, const EmbeddingModel& embedding,
                                  const ExploreContext& ctx, bool training, Rng& rng, EpisodeSinks sinks = {}) {
  EpisodeOutcome out;
  envs::StepResult s = env.reset(env_rng);
  const double first_reward = s.reward;
  std::vector<Transition> episode;
  envs::FrameStacker stacker(env.spec().frame_stack);
  stacker.reset(embedding.encode(s.observation));
  if (ctx.ou != nullptr) ctx.ou->reset();
  while (!s.done) {
    const StackedLatent z = stacker.stacked();
    PlanResult plan;
    const bool planning = training && ctx.kind == ExplorerKind::TrajOpt;
    const Action a = explore_action(z, ctx, training, rng, planning ? &plan : nullptr);
    s = env.step(a);
    const Latent z_new = embedding.encode(s.observation);
    stacker.push(z_new);
    out.reward += s.reward;
    out.success = out.success || s.info.success;
    if (sinks.buffer != nullptr) episode.push_back({z, a, s.reward, stacker.stacked(), s.info.terminal});
    if (sinks.dynamics != nullptr) sinks.dynamics->push_back({z, a, z_new});
    if (planning && sinks.traces != nullptr) {
      nlohmann::json j{{"episode", sinks.episode},     {"step", out.steps},
                       {"initial", plan.initial_value}, {"final", plan.final_value},
                       {"iterations", plan.iterations}, {"fell_back", plan.fell_back},
                       {"trace", plan.trace}};
      *sinks.traces << j.dump() << '\n';
    }
    ++out.steps;
  }
  if (sinks.buffer != nullptr) {
    if (ctx.agent->config().critic == CriticKind::V) episode = state_reward_transitions(episode, first_reward);
    for (auto& tr : episode) sinks.buffer->push(std::move(tr));
  }
  return out;
}

struct RunResult {
  bool ok = false;
  std::string error;
  int episodes_completed = 0;
  fs::path dir;
};

inline void write_status(const fs::path& dir, const std::string& status, int episodes, const std::string& error = {}) {
  nlohmann::json j{{"status", status}, {"episodes_completed", episodes}};
  if (!error.empty()) j["error"] = error;
  std::ofstream(dir / "status.json") << j.dump(2) << '\n';
}

inline fs::path run_dir(const ExperimentConfig& c, std::uint64_t seed) {
  return fs::path(c.output_dir) / c.method_label() / ("seed_" + std::to_string(seed));
}

/// One replica: pretraining (or loading shared pretrained models), replay
/// seeding, then per episode an exploration rollout, model and agent updates,
/// and deterministic evaluation rollouts. Failures are recorded in
/// status.json; everything written before the failure is kept.
inline RunResult run_experiment(const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir) {
  RunResult res;
  res.dir = dir;
  fs::create_directories(dir);
  {
    nlohmann::json j = to_json(c);
    j["seed"] = seed;
    std::ofstream(dir / "config.json") << j.dump(2) << '\n';
  }
  write_status(dir, "running", 0);
  try {
    validate(c);
    const auto env = make_env(c);
    const auto eval_env = make_env(c);
    const envs::EnvSpec& spec = env->spec();
    Pretrained pre = c.pretrained_dir.empty() ? pretrain(c, seed, dir / "pretrained") : load_pretrained(c.pretrained_dir);
    require(pre.embedding.latent_dim() == c.embedding.latent_dim, "pretrained embedding has a different latent_dim");

    std::vector<DynamicsSample> dyn_data = dynamics_samples(pre.demos, pre.embedding, spec.frame_stack);
    DynamicsModel dyn = pre.dynamics;
    nn::Adam dyn_opt(dyn.network().num_params(), {.lr = c.dynamics.lr});

    Rng agent_rng(derive_seed(seed, kTagAgent));
    Agent agent(agent_config(c, spec));
    agent.init(agent_rng);
    ReplayBuffer buffer(c.agent.capacity);
    const bool state_rewards = c.critic == CriticKind::V;
    envs::seed_replay(buffer, pre.demos, c.n_seed_demos, pre.embedding, spec.frame_stack, state_rewards);

    Rng reward_rng(derive_seed(seed, kTagReward));
    std::optional<LatentRewardModel> reward;
    if (c.objective == ObjectiveKind::RPlusQ && c.explorer == ExplorerKind::TrajOpt)
      reward.emplace(agent.state_dim(), c.reward_model, reward_rng);

    OUProcess ou(spec.action_dim, c.ou);
    ExploreContext ctx;
    ctx.kind = c.explorer;
    ctx.agent = &agent;
    ctx.dynamics = &dyn;
    ctx.ou = &ou;
    ctx.objective = c.objective;
    ctx.horizon = c.horizon;
    if (!c.weights.empty()) ctx.weights = Eigen::Map<const Vec>(c.weights.data(), static_cast<Eigen::Index>(c.weights.size()));
    ctx.planner = c.planner;
    if (reward) ctx.reward = &reward->network();

    Rng env_rng(derive_seed(seed, kTagEnv));
    Rng eval_rng(derive_seed(seed, kTagEvalEnv));
    Rng explore_rng(derive_seed(seed, kTagExplore));
    Rng train_rng(derive_seed(seed, kTagTrain));
    MetricsWriter metrics(dir / "metrics.jsonl");
    std::ofstream traces;
    if (c.explorer == ExplorerKind::TrajOpt && c.episodes > 0) traces.open(dir / "planner_traces.jsonl");

    using clock = std::chrono::steady_clock;
    auto seconds_since = [&](clock::time_point t0) {
      return c.timing ? std::chrono::duration<double>(clock::now() - t0).count() : 0.0;
    };

    for (int e = 0; e < c.episodes; ++e) {
      auto t0 = clock::now();
      EpisodeSinks sinks{&buffer, &dyn_data, traces.is_open() ? &traces : nullptr, e};
      const EpisodeOutcome ex = run_episode(*env, env_rng, pre.embedding, ctx, true, explore_rng, sinks);
      if (c.dynamics_steps > 0) fit_dynamics(dyn, dyn_opt, dyn_data, c.dynamics_steps, c.dynamics.batch, train_rng);
      if (reward) reward->fit(buffer, c.reward_model.steps_per_episode, reward_rng, state_rewards);
      for (int it = 0; it < c.train_iterations; ++it) train_step(buffer, agent, &dyn, train_rng);
      metrics.append({e, "explore", ex.reward, ex.success, ex.steps, seconds_since(t0), seed});

      for (int v = 0; v < c.eval_episodes; ++v) {
        t0 = clock::now();
        const EpisodeOutcome ev = run_episode(*eval_env, eval_rng, pre.embedding, ctx, false, explore_rng);
        metrics.append({e, "eval", ev.reward, ev.success, ev.steps, seconds_since(t0), seed});
      }
      res.episodes_completed = e + 1;
    }

    if (c.episodes > 0) {
      const fs::path ck = dir / "checkpoints";
      io::save_checkpoint(ck / "agent.ckpt", agent.to_checkpoint());
      io::save_checkpoint(ck / "dynamics.ckpt", dyn.to_checkpoint());
      io::save_checkpoint(ck / "embedding.ckpt", pre.embedding.to_checkpoint());
      if (reward) io::save_checkpoint(ck / "reward.ckpt", reward->to_checkpoint());
    }
    write_status(dir, "ok", res.episodes_completed);
    res.ok = true;
  } catch (const std::exception& ex) {
    res.error = ex.what();
    write_status(dir, "failed", res.episodes_completed, res.error);
  }
  return res;
}

/// Deterministic rollouts of a trained run.
inline std::vector<EpisodeOutcome> evaluate_run(const ExperimentConfig& c, const fs::path& dir, int episodes,
                                                std::uint64_t seed) {
  const fs::path ck = dir / "checkpoints";
  const EmbeddingModel embedding = EmbeddingModel::from_checkpoint(io::load_checkpoint(ck / "embedding.ckpt"));
  const Agent agent = Agent::from_checkpoint(io::load_checkpoint(ck / "agent.ckpt"));
  const auto env = make_env(c);
  ExploreContext ctx;
  ctx.agent = &agent;
  Rng env_rng(derive_seed(seed, kTagEvalEnv));
  Rng rng(seed);
  std::vector<EpisodeOutcome> out;
  for (int e = 0; e < episodes; ++e) out.push_back(run_episode(*env, env_rng, embedding, ctx, false, rng));
  return out;
}

}  // namespace lto::harness
