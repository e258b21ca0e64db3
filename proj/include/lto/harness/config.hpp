#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lto/agent.hpp"
#include "lto/dynamics.hpp"
#include "lto/embedding.hpp"
#include "lto/envs/demonstrations.hpp"
#include "lto/exploration.hpp"

namespace lto::harness {

using json = nlohmann::json;

struct DynamicsSettings {
  std::vector<int> hidden{400, 400};
  double lr = 1e-3;
  int batch = 64;
  int pretrain_steps = 2000;
};

struct EmbeddingSettings {
  int latent_dim = 20;
  std::vector<int> conv_channels{16, 32, 32};
  double alpha = 0.5;
  int epochs = 200;
  int batch = 64;
  double lr = 1e-3;
};

struct AgentSettings {
  std::vector<int> hidden{400, 300};
  double gamma = 0.99;
  double tau = 0.005;
  int batch = 64;
  std::size_t capacity = 1000000;
  double critic_lr = 1e-3;
  double actor_lr = 1e-4;
  double final_layer_init = 3e-3;
};

struct RewardModelSettings {
  std::vector<int> hidden{64, 64};
  double lr = 1e-3;
  int batch = 64;
  int steps_per_episode = 100;
};

struct ExperimentConfig {
  std::string label;  // empty: derived from critic, explorer and horizon
  std::string env = "peg2d";
  CriticKind critic = CriticKind::V;
  ExplorerKind explorer = ExplorerKind::TrajOpt;
  ObjectiveKind objective = ObjectiveKind::QSum;
  int horizon = 3;
  std::vector<double> weights;  // empty: uniform 1/H
  std::vector<std::uint64_t> seeds{0};
  int episodes = 300;
  int train_iterations = 1000;
  int dynamics_steps = 200;
  int eval_episodes = 1;
  int n_seed_demos = 5;
  bool timing = true;
  std::string output_dir = "runs";
  std::string pretrained_dir;  // optional: reuse demos + embedding + dynamics

  envs::Peg2dConfig peg2d;
  envs::RunnerConfig runner;
  envs::DemoConfig demos;
  EmbeddingSettings embedding;
  DynamicsSettings dynamics;
  AgentSettings agent;
  OUConfig ou;
  PlannerConfig planner;
  RewardModelSettings reward_model;

  std::string method_label() const {
    if (!label.empty()) return label;
    std::string s = to_string(critic) + "-" + to_string(explorer);
    if (explorer == ExplorerKind::TrajOpt) s += "-" + to_string(objective) + "-H" + std::to_string(horizon);
    return s;
  }
};

namespace detail {

/// Reads known keys from one JSON object and rejects anything left over.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  template <class Fn>
  void section(const char* key, Fn&& fn) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    Fields sub(j_.at(key), where_ + "." + key);
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  detail::Fields f(j, "config");
  std::string critic = to_string(c.critic), explorer = to_string(c.explorer), objective = to_string(c.objective);
  f.get("label", c.label);
  f.get("env", c.env);
  f.get("critic", critic);
  f.get("explorer", explorer);
  f.get("objective", objective);
  f.get("horizon", c.horizon);
  f.get("weights", c.weights);
  f.get("seeds", c.seeds);
  f.get("episodes", c.episodes);
  f.get("train_iterations", c.train_iterations);
  f.get("dynamics_steps", c.dynamics_steps);
  f.get("eval_episodes", c.eval_episodes);
  f.get("n_seed_demos", c.n_seed_demos);
  f.get("timing", c.timing);
  f.get("output_dir", c.output_dir);
  f.get("pretrained_dir", c.pretrained_dir);
  f.section("peg2d", [&](detail::Fields& s) {
    auto& p = c.peg2d;
    s.get("image_size", p.image_size);
    s.get("channels", p.channels);
    s.get("slot_center", p.slot_center);
    s.get("slot_width", p.slot_width);
    s.get("slot_depth", p.slot_depth);
    s.get("start_x", p.start_x);
    s.get("start_y", p.start_y);
    s.get("start_std_x", p.start_std_x);
    s.get("start_std_y", p.start_std_y);
    s.get("max_step", p.max_step);
    s.get("episode_length", p.episode_length);
    s.get("success_reward", p.success_reward);
    s.get("peg_radius_px", p.peg_radius_px);
  });
  f.section("runner", [&](detail::Fields& s) {
    auto& r = c.runner;
    s.get("image_size", r.image_size);
    s.get("channels", r.channels);
    s.get("dt", r.dt);
    s.get("force", r.force);
    s.get("drag", r.drag);
    s.get("action_repeat", r.action_repeat);
    s.get("reward_scale", r.reward_scale);
    s.get("episode_length", r.episode_length);
    s.get("frame_stack", r.frame_stack);
    s.get("pixels_per_unit", r.pixels_per_unit);
    s.get("top_period_px", r.top_period_px);
    s.get("bottom_period_px", r.bottom_period_px);
  });
  f.section("demos", [&](detail::Fields& s) {
    s.get("n_total", c.demos.n_total);
    s.get("n_positive", c.demos.n_positive);
    s.get("controller_noise", c.demos.controller_noise);
    s.get("max_retries", c.demos.max_retries);
    s.get("max_steps", c.demos.max_steps);
  });
  f.section("embedding", [&](detail::Fields& s) {
    auto& e = c.embedding;
    s.get("latent_dim", e.latent_dim);
    s.get("conv_channels", e.conv_channels);
    s.get("alpha", e.alpha);
    s.get("epochs", e.epochs);
    s.get("batch", e.batch);
    s.get("lr", e.lr);
  });
  f.section("dynamics", [&](detail::Fields& s) {
    s.get("hidden", c.dynamics.hidden);
    s.get("lr", c.dynamics.lr);
    s.get("batch", c.dynamics.batch);
    s.get("pretrain_steps", c.dynamics.pretrain_steps);
  });
  f.section("agent", [&](detail::Fields& s) {
    auto& a = c.agent;
    s.get("hidden", a.hidden);
    s.get("gamma", a.gamma);
    s.get("tau", a.tau);
    s.get("batch", a.batch);
    s.get("capacity", a.capacity);
    s.get("critic_lr", a.critic_lr);
    s.get("actor_lr", a.actor_lr);
    s.get("final_layer_init", a.final_layer_init);
  });
  f.section("ou", [&](detail::Fields& s) {
    s.get("theta", c.ou.theta);
    s.get("sigma", c.ou.sigma);
    s.get("dt", c.ou.dt);
    s.get("mu", c.ou.mu);
  });
  f.section("planner", [&](detail::Fields& s) {
    s.get("max_iterations", c.planner.max_iterations);
    s.get("memory", c.planner.memory);
    s.get("gtol", c.planner.gtol);
    s.get("armijo", c.planner.armijo);
    s.get("max_backtracks", c.planner.max_backtracks);
  });
  f.section("reward_model", [&](detail::Fields& s) {
    s.get("hidden", c.reward_model.hidden);
    s.get("lr", c.reward_model.lr);
    s.get("batch", c.reward_model.batch);
    s.get("steps_per_episode", c.reward_model.steps_per_episode);
  });
  f.finish();
  c.critic = parse_critic_kind(critic);
  c.explorer = parse_explorer_kind(explorer);
  c.objective = parse_objective_kind(objective);
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  const auto& p = c.peg2d;
  const auto& r = c.runner;
  const auto& e = c.embedding;
  const auto& a = c.agent;
  return json{
      {"label", c.label},
      {"env", c.env},
      {"critic", to_string(c.critic)},
      {"explorer", to_string(c.explorer)},
      {"objective", to_string(c.objective)},
      {"horizon", c.horizon},
      {"weights", c.weights},
      {"seeds", c.seeds},
      {"episodes", c.episodes},
      {"train_iterations", c.train_iterations},
      {"dynamics_steps", c.dynamics_steps},
      {"eval_episodes", c.eval_episodes},
      {"n_seed_demos", c.n_seed_demos},
      {"timing", c.timing},
      {"output_dir", c.output_dir},
      {"pretrained_dir", c.pretrained_dir},
      {"peg2d",
       {{"image_size", p.image_size},
        {"channels", p.channels},
        {"slot_center", p.slot_center},
        {"slot_width", p.slot_width},
        {"slot_depth", p.slot_depth},
        {"start_x", p.start_x},
        {"start_y", p.start_y},
        {"start_std_x", p.start_std_x},
        {"start_std_y", p.start_std_y},
        {"max_step", p.max_step},
        {"episode_length", p.episode_length},
        {"success_reward", p.success_reward},
        {"peg_radius_px", p.peg_radius_px}}},
      {"runner",
       {{"image_size", r.image_size},
        {"channels", r.channels},
        {"dt", r.dt},
        {"force", r.force},
        {"drag", r.drag},
        {"action_repeat", r.action_repeat},
        {"reward_scale", r.reward_scale},
        {"episode_length", r.episode_length},
        {"frame_stack", r.frame_stack},
        {"pixels_per_unit", r.pixels_per_unit},
        {"top_period_px", r.top_period_px},
        {"bottom_period_px", r.bottom_period_px}}},
      {"demos",
       {{"n_total", c.demos.n_total},
        {"n_positive", c.demos.n_positive},
        {"controller_noise", c.demos.controller_noise},
        {"max_retries", c.demos.max_retries},
        {"max_steps", c.demos.max_steps}}},
      {"embedding",
       {{"latent_dim", e.latent_dim},
        {"conv_channels", e.conv_channels},
        {"alpha", e.alpha},
        {"epochs", e.epochs},
        {"batch", e.batch},
        {"lr", e.lr}}},
      {"dynamics",
       {{"hidden", c.dynamics.hidden},
        {"lr", c.dynamics.lr},
        {"batch", c.dynamics.batch},
        {"pretrain_steps", c.dynamics.pretrain_steps}}},
      {"agent",
       {{"hidden", a.hidden},
        {"gamma", a.gamma},
        {"tau", a.tau},
        {"batch", a.batch},
        {"capacity", a.capacity},
        {"critic_lr", a.critic_lr},
        {"actor_lr", a.actor_lr},
        {"final_layer_init", a.final_layer_init}}},
      {"ou", {{"theta", c.ou.theta}, {"sigma", c.ou.sigma}, {"dt", c.ou.dt}, {"mu", c.ou.mu}}},
      {"planner",
       {{"max_iterations", c.planner.max_iterations},
        {"memory", c.planner.memory},
        {"gtol", c.planner.gtol},
        {"armijo", c.planner.armijo},
        {"max_backtracks", c.planner.max_backtracks}}},
      {"reward_model",
       {{"hidden", c.reward_model.hidden},
        {"lr", c.reward_model.lr},
        {"batch", c.reward_model.batch},
        {"steps_per_episode", c.reward_model.steps_per_episode}}},
  };
}

/// Structural checks beyond what parsing enforces.
inline void validate(const ExperimentConfig& c) {
  require(c.env == "peg2d" || c.env == "runner", "config: env must be 'peg2d' or 'runner', got '" + c.env + "'");
  require(c.horizon >= 1, "config: horizon must be at least 1");
  require(c.weights.empty() || static_cast<int>(c.weights.size()) == c.horizon + 1,
          "config: weights must have horizon + 1 entries");
  require(!c.seeds.empty(), "config: seeds must not be empty");
  std::set<std::uint64_t> distinct(c.seeds.begin(), c.seeds.end());
  require(distinct.size() == c.seeds.size(), "config: seeds must be distinct");
  require(c.episodes >= 0 && c.train_iterations >= 0 && c.dynamics_steps >= 0 && c.eval_episodes >= 0,
          "config: episode and iteration counts must be non-negative");
  require(c.n_seed_demos >= 0, "config: n_seed_demos must be non-negative");
  require(c.agent.batch >= 1 && c.dynamics.batch >= 1 && c.embedding.batch >= 1 && c.reward_model.batch >= 1,
          "config: batch sizes must be positive");
  if (c.env == "runner") require(c.n_seed_demos == 0 || c.demos.n_positive > 0, "config: runner has no positives to seed");
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  ExperimentConfig c = parse_config(j);
  validate(c);
  return c;
}

}  // namespace lto::harness
