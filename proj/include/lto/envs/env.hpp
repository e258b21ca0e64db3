#pragma once

#include <memory>
#include <string>

#include "lto/core.hpp"
#include "lto/image.hpp"

namespace lto::envs {

enum class RewardKind { Sparse, Dense };

struct EnvSpec {
  std::string name;
  int action_dim = 1;
  ActionBox box;
  int episode_length = 1;  // T
  int frame_stack = 1;     // k
  RewardKind reward = RewardKind::Sparse;
};

struct StepInfo {
  Vec true_state;
  bool success = false;
  // True when the episode ended for a reason other than the time limit.
  bool terminal = false;
};

struct StepResult {
  Image observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Pixel-observation environment. Instances are single-owner.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual StepResult reset(Rng& rng) = 0;
  /// Actions must lie inside spec().box; callers clip.
  virtual StepResult step(const Vec& action) = 0;
  virtual int steps_taken() const = 0;
};

inline void check_action(const EnvSpec& spec, const Vec& a) {
  require(a.size() == spec.action_dim, spec.name + ": action has wrong dimension");
  require(spec.box.contains(a), spec.name + ": action outside the box (clip before stepping)");
}

}  // namespace lto::envs
