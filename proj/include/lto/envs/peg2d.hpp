#pragma once

#include <algorithm>

#include "lto/envs/env.hpp"

namespace lto::envs {

struct Peg2dConfig {
  int image_size = 64;
  int channels = 3;
  double slot_center = 0.5;
  double slot_width = 0.08;
  double slot_depth = 0.2;
  double start_x = 0.5;
  double start_y = 0.6;
  double start_std_x = 0.05;
  double start_std_y = 0.05;
  double max_step = 0.05;
  int episode_length = 20;
  double success_reward = 0.9;
  double peg_radius_px = 3.0;
};

/// Sparse-reward 2-D insertion task. The peg moves by position deltas in the
/// unit-square workspace; the slot is a vertical channel cut into a solid
/// block along the bottom edge. Leaving the workspace yields -1 and ends the
/// episode; inside the channel the reward is the insertion depth fraction and
/// the episode ends once it reaches success_reward.
class Peg2d final : public Environment {
 public:
  explicit Peg2d(Peg2dConfig cfg = {}) : cfg_(cfg) {
    require(cfg_.image_size > 0 && (cfg_.channels == 1 || cfg_.channels == 3), "peg2d: bad image configuration");
    require(cfg_.episode_length >= 1, "peg2d: episode_length must be at least 1");
    spec_.name = "peg2d";
    spec_.action_dim = 2;
    spec_.box = ActionBox::uniform(2, -cfg_.max_step, cfg_.max_step);
    spec_.episode_length = cfg_.episode_length;
    spec_.frame_stack = 1;
    spec_.reward = RewardKind::Sparse;
  }

  const EnvSpec& spec() const override { return spec_; }
  const Peg2dConfig& config() const { return cfg_; }
  int steps_taken() const override { return t_; }
  Vec position() const { return Eigen::Vector2d(x_, y_); }

  StepResult reset(Rng& rng) override {
    const double margin = 1e-3;
    x_ = std::clamp(normal(rng, cfg_.start_x, cfg_.start_std_x), margin, 1.0 - margin);
    y_ = std::clamp(normal(rng, cfg_.start_y, cfg_.start_std_y), cfg_.slot_depth + margin, 1.0 - margin);
    t_ = 0;
    done_ = false;
    return observe(0.0, false);
  }

  /// Places the peg directly (used by tests and scripted checks).
  StepResult set_state(double x, double y) {
    x_ = x;
    y_ = y;
    t_ = 0;
    done_ = false;
    return observe(reward_at(x_, y_), false);
  }

  StepResult step(const Vec& a) override {
    require(!done_, "peg2d: step() after the episode ended; call reset()");
    check_action(spec_, a);
    double nx = x_ + a[0];
    double ny = y_ + a[1];
    ++t_;
    if (nx < 0.0 || nx > 1.0 || ny > 1.0) {
      x_ = nx;
      y_ = ny;
      done_ = true;
      StepResult out = observe(-1.0, false);
      out.info.terminal = true;
      return out;
    }
    if (ny < cfg_.slot_depth && !in_channel_x(nx)) {
      if (y_ < cfg_.slot_depth) {
        // Already inside the channel: the walls stop sideways motion.
        nx = std::clamp(nx, channel_lo(), channel_hi());
      } else {
        ny = cfg_.slot_depth;
      }
    }
    if (in_channel_x(nx) && ny < 0.0) ny = 0.0;
    x_ = nx;
    y_ = ny;
    const double r = reward_at(x_, y_);
    const bool success = r >= cfg_.success_reward;
    done_ = success || t_ >= cfg_.episode_length;
    StepResult out = observe(r, success);
    out.info.terminal = success;
    return out;
  }

  bool in_channel_x(double x) const { return x >= channel_lo() && x <= channel_hi(); }
  double channel_lo() const { return cfg_.slot_center - 0.5 * cfg_.slot_width; }
  double channel_hi() const { return cfg_.slot_center + 0.5 * cfg_.slot_width; }

  /// Insertion depth fraction in the channel, 0 elsewhere.
  double reward_at(double x, double y) const {
    if (!in_channel_x(x) || y >= cfg_.slot_depth) return 0.0;
    return std::clamp((cfg_.slot_depth - y) / cfg_.slot_depth, 0.0, 1.0);
  }

  /// Pixel coordinates (column, row) of a workspace point.
  Eigen::Vector2d to_pixel(double x, double y) const {
    const double s = cfg_.image_size;
    return {x * s - 0.5, (1.0 - y) * s - 0.5};
  }

  Image render() const {
    const int s = cfg_.image_size;
    Image im(s, s, cfg_.channels);
    const Eigen::Vector2d peg = to_pixel(x_, y_);
    const double r2 = cfg_.peg_radius_px * cfg_.peg_radius_px;
    for (int row = 0; row < s; ++row) {
      const double wy = 1.0 - (row + 0.5) / s;
      for (int col = 0; col < s; ++col) {
        const double wx = (col + 0.5) / s;
        float rgb[3] = {0.08f, 0.08f, 0.1f};
        if (wy < cfg_.slot_depth) {
          if (in_channel_x(wx)) {
            rgb[0] = 0.0f, rgb[1] = 0.2f, rgb[2] = 0.3f;
          } else {
            rgb[0] = 0.0f, rgb[1] = 0.55f, rgb[2] = 0.75f;
          }
        }
        const double dx = col - peg[0];
        const double dy = row - peg[1];
        if (dx * dx + dy * dy <= r2) rgb[0] = 1.0f, rgb[1] = 0.35f, rgb[2] = 0.1f;
        if (cfg_.channels == 3) {
          for (int c = 0; c < 3; ++c) im.at(c, row, col) = rgb[c];
        } else {
          im.at(0, row, col) = 0.3f * rgb[0] + 0.6f * rgb[1] + 0.1f * rgb[2];
        }
      }
    }
    quantize(im);
    return im;
  }

 private:
  StepResult observe(double reward, bool success) const {
    StepResult r;
    r.observation = render();
    r.reward = reward;
    r.done = done_;
    r.info.true_state = position();
    r.info.success = success;
    return r;
  }

  Peg2dConfig cfg_;
  EnvSpec spec_;
  double x_ = 0.5;
  double y_ = 0.5;
  int t_ = 0;
  bool done_ = false;
};

}  // namespace lto::envs
