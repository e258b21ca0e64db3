#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lto/lto.hpp"

namespace fs = std::filesystem;
using namespace lto;

namespace {

struct Overrides {
  std::optional<int> episodes, horizon, train_iterations, dynamics_steps, eval_episodes, n_seed_demos;
  std::optional<std::string> critic, explorer, objective, env, pretrained, label;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--episodes", episodes, "Training episodes");
    cmd->add_option("--horizon", horizon, "Planning horizon H");
    cmd->add_option("--train-iterations", train_iterations, "Agent updates per episode");
    cmd->add_option("--dynamics-steps", dynamics_steps, "Dynamics updates per episode");
    cmd->add_option("--eval-episodes", eval_episodes, "Evaluation rollouts per episode");
    cmd->add_option("--n-seed-demos", n_seed_demos, "Positive demonstrations copied into the replay buffer");
    cmd->add_option("--critic", critic, "q or v");
    cmd->add_option("--explorer", explorer, "ou or trajopt");
    cmd->add_option("--objective", objective, "q_sum, r_plus_q or terminal_q");
    cmd->add_option("--env", env, "peg2d or runner");
    cmd->add_option("--pretrained", pretrained, "Directory with demos/, embedding.ckpt and dynamics.ckpt");
    cmd->add_option("--label", label, "Method label used by report");
  }

  void apply(harness::ExperimentConfig& c) const {
    if (episodes) c.episodes = *episodes;
    if (horizon) c.horizon = *horizon;
    if (train_iterations) c.train_iterations = *train_iterations;
    if (dynamics_steps) c.dynamics_steps = *dynamics_steps;
    if (eval_episodes) c.eval_episodes = *eval_episodes;
    if (n_seed_demos) c.n_seed_demos = *n_seed_demos;
    if (critic) c.critic = parse_critic_kind(*critic);
    if (explorer) c.explorer = parse_explorer_kind(*explorer);
    if (objective) c.objective = parse_objective_kind(*objective);
    if (env) c.env = *env;
    if (pretrained) c.pretrained_dir = *pretrained;
    if (label) c.label = *label;
  }
};

harness::ExperimentConfig load(const std::string& path) {
  if (path.empty()) return {};
  return harness::load_config(path);
}

std::string default_out() {
  const char* v = std::getenv("LTO_OUTPUT_DIR");
  return v != nullptr ? v : "runs";
}

/// Directories below `root` (inclusive) that hold a config.json.
std::vector<fs::path> find_runs(const fs::path& root) {
  std::vector<fs::path> out;
  if (fs::exists(root / "config.json")) out.push_back(root);
  if (fs::is_directory(root)) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_directory() && fs::exists(e.path() / "config.json")) out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("LTO_THREADS")) Eigen::setNbThreads(std::max(1, std::atoi(t)));

  CLI::App app{"Latent trajectory-optimization exploration for DDPG"};
  app.require_subcommand(1);

  std::string config_path, out = default_out();
  std::uint64_t seed = 0;

  auto* demos = app.add_subcommand("demos", "Generate a demonstration dataset");
  demos->add_option("--config", config_path, "Experiment config (JSON)");
  demos->add_option("--seed", seed, "Random seed");
  demos->add_option("--out", out, "Output directory")->capture_default_str();

  auto* pre = app.add_subcommand("pretrain", "Generate demonstrations and pretrain embedding and dynamics");
  pre->add_option("--config", config_path, "Experiment config (JSON)");
  pre->add_option("--seed", seed, "Random seed");
  pre->add_option("--out", out, "Output directory")->capture_default_str();

  auto* train = app.add_subcommand("train", "Run the training loop for one seed");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required();
  train->add_option("--seed", seed, "Random seed")->required();
  train->add_option("--out", out, "Output root; the run goes to <out>/<label>/seed_<seed>")->required();
  Overrides ov;
  ov.add_to(train);

  std::string run;
  int eval_n = 10;
  auto* eval = app.add_subcommand("eval", "Deterministic rollouts from a trained run");
  eval->add_option("--run", run, "Run directory")->required();
  eval->add_option("--episodes", eval_n, "Number of rollouts")->capture_default_str();
  eval->add_option("--seed", seed, "Random seed");

  std::vector<std::string> roots;
  int window = 50;
  auto* rep = app.add_subcommand("report", "Plots and success-rate table from run directories");
  rep->add_option("runs", roots, "Run directories or roots to search")->required();
  rep->add_option("--out", out, "Output directory")->capture_default_str();
  rep->add_option("--window", window, "Success-rate window")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*demos) {
      const auto c = load(config_path);
      const Dataset ds = harness::make_demonstrations(c, seed);
      save_dataset(out, ds);
      std::cout << "wrote " << ds.episodes.size() << " episodes (" << ds.num_positive() << " positive) to " << out
                << "\n";
    } else if (*pre) {
      const auto c = load(config_path);
      harness::pretrain(c, seed, out);
      std::cout << "wrote demos/, embedding.ckpt and dynamics.ckpt to " << out << "\n";
    } else if (*train) {
      auto c = load(config_path);
      ov.apply(c);
      c.output_dir = out;
      c.seeds = {seed};
      harness::validate(c);
      const auto dir = harness::run_dir(c, seed);
      const auto r = harness::run_experiment(c, seed, dir);
      if (!r.ok) {
        std::cerr << "run failed after " << r.episodes_completed << " episodes: " << r.error << "\n";
        return 2;
      }
      std::cout << "completed " << r.episodes_completed << " episodes in " << dir << "\n";
    } else if (*eval) {
      std::ifstream is(fs::path(run) / "config.json");
      if (!is) throw ConfigError("eval: no config.json in " + run);
      auto j = nlohmann::json::parse(is);
      j.erase("seed");
      const auto c = harness::parse_config(j);
      const auto outcomes = harness::evaluate_run(c, run, eval_n, seed);
      int successes = 0;
      double total = 0.0;
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        std::cout << "episode " << i << " reward " << outcomes[i].reward << " steps " << outcomes[i].steps
                  << (outcomes[i].success ? " success" : "") << "\n";
        successes += outcomes[i].success ? 1 : 0;
        total += outcomes[i].reward;
      }
      std::cout << "mean reward " << total / std::max<std::size_t>(1, outcomes.size()) << ", successes " << successes
                << "/" << outcomes.size() << "\n";
    } else if (*rep) {
      std::vector<fs::path> dirs;
      for (const auto& r : roots) {
        const auto found = find_runs(r);
        if (found.empty()) dirs.emplace_back(r);
        dirs.insert(dirs.end(), found.begin(), found.end());
      }
      const auto res = harness::report(dirs, out, window);
      for (const auto& s : res.skipped) std::cerr << "skipped " << s << "\n";
      std::cout << res.methods.size() << " methods; table " << res.table.string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
