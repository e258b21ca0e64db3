#pragma once

#include <cmath>

#include "lto/envs/env.hpp"

namespace lto::envs {

struct RunnerConfig {
  int image_size = 64;
  int channels = 3;
  double dt = 0.05;
  double force = 1.0;
  double drag = 0.5;
  int action_repeat = 2;
  double reward_scale = 1.0;
  int episode_length = 420;
  int frame_stack = 3;
  double pixels_per_unit = 40.0;
  double top_period_px = 32.0;
  double bottom_period_px = 80.0;
};

/// Dense-reward cart on a line. Each step applies the force twice
/// (semi-implicit Euler) and pays reward_scale times the resulting velocity.
/// The observation is a pair of scrolling stripe bands behind a fixed cart,
/// so velocity can only be read from several consecutive frames.
class Runner final : public Environment {
 public:
  explicit Runner(RunnerConfig cfg = {}) : cfg_(cfg) {
    require(cfg_.image_size > 0 && (cfg_.channels == 1 || cfg_.channels == 3), "runner: bad image configuration");
    require(cfg_.episode_length >= 1, "runner: episode_length must be at least 1");
    require(cfg_.action_repeat >= 1 && cfg_.dt > 0.0, "runner: bad integration settings");
    spec_.name = "runner";
    spec_.action_dim = 1;
    spec_.box = ActionBox::uniform(1, -1.0, 1.0);
    spec_.episode_length = cfg_.episode_length;
    spec_.frame_stack = cfg_.frame_stack;
    spec_.reward = RewardKind::Dense;
  }

  const EnvSpec& spec() const override { return spec_; }
  const RunnerConfig& config() const { return cfg_; }
  int steps_taken() const override { return t_; }
  double position() const { return x_; }
  double velocity() const { return v_; }

  /// Terminal speed under a saturated action.
  double max_speed() const { return cfg_.force / cfg_.drag; }

  StepResult reset(Rng& rng) override {
    x_ = uniform(rng, 0.0, 1.0);
    v_ = 0.0;
    t_ = 0;
    done_ = false;
    return observe(0.0);
  }

  StepResult step(const Vec& a) override {
    require(!done_, "runner: step() after the episode ended; call reset()");
    check_action(spec_, a);
    for (int i = 0; i < cfg_.action_repeat; ++i) {
      v_ += cfg_.dt * (cfg_.force * a[0] - cfg_.drag * v_);
      x_ += cfg_.dt * v_;
    }
    ++t_;
    done_ = t_ >= cfg_.episode_length;
    return observe(cfg_.reward_scale * v_);
  }

  Image render() const {
    const int s = cfg_.image_size;
    Image im(s, s, cfg_.channels);
    const double shift = x_ * cfg_.pixels_per_unit;
    const int band = s / 2;
    const double two_pi = 2.0 * std::acos(-1.0);
    for (int row = 0; row < s; ++row) {
      const bool top = row < band;
      const double period = top ? cfg_.top_period_px : cfg_.bottom_period_px;
      for (int col = 0; col < s; ++col) {
        const double phase = two_pi * (col + shift) / period;
        const float v = static_cast<float>(0.5 + 0.4 * std::sin(phase));
        float rgb[3] = {top ? v : 0.2f, top ? 0.2f : v, 0.5f * v};
        const bool cart = std::abs(col - s / 2 + 0.5) < s / 10.0 && std::abs(row - band + 0.5) < s / 16.0;
        if (cart) rgb[0] = 1.0f, rgb[1] = 1.0f, rgb[2] = 1.0f;
        if (cfg_.channels == 3) {
          for (int c = 0; c < 3; ++c) im.at(c, row, col) = rgb[c];
        } else {
          im.at(0, row, col) = (rgb[0] + rgb[1] + rgb[2]) / 3.0f;
        }
      }
    }
    quantize(im);
    return im;
  }

 private:
  StepResult observe(double reward) const {
    StepResult r;
    r.observation = render();
    r.reward = reward;
    r.done = done_;
    r.info.true_state = Eigen::Vector2d(x_, v_);
    r.info.success = false;
    return r;
  }

  RunnerConfig cfg_;
  EnvSpec spec_;
  double x_ = 0.0;
  double v_ = 0.0;
  int t_ = 0;
  bool done_ = false;
};

}  // namespace lto::envs
