#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"

namespace moan::env {

enum class EnvKind { pointmass2d, pendulum1d };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& s);

struct Wall {
  double x0, y0, x1, y1;
  bool trap = false;  // touching a trap wall ends the episode
};

struct ContinuousEnv {
  EnvKind kind = EnvKind::pointmass2d;
  int state_dim = 4;
  int action_dim = 2;
  int horizon = 200;
  double gamma = 0.99;
  double noise_std = 0.01;
  std::vector<double> state_low;
  std::vector<double> state_high;

  // pointmass2d: state (x, y, vx, vy)
  std::array<double, 4> start_box{};  // x_lo, x_hi, y_lo, y_hi
  std::array<double, 2> goal{};
  // reward = 1 - |p' - goal| / reward_radius, the box diagonal
  double reward_radius = 2.0 * 1.4142135623730951;
  double velocity_decay = 0.8;
  double accel = 0.3;
  double dt = 0.1;
  double bump_penalty = 0.2;
  double trap_reward = -1.0;
  std::vector<Wall> walls;

  // pendulum1d: state (cos th, sin th, th_dot), th = 0 hangs straight down
  double gravity = 10.0;
  double mass = 1.0;
  double length = 1.0;
  double torque_scale = 12.0;
  double max_speed = 8.0;
  double init_spread = 0.1;  // th0, th_dot0 ~ U(-spread, spread)
  double torque_cost = 1e-3;

  static ContinuousEnv make(EnvKind kind);
  std::string id() const { return to_string(kind); }
  // Documented compact state box used for clipping.
  bool in_box(std::span<const double> s, double scale = 1.0) const;
};

struct StepResult {
  std::vector<double> next_state;
  double reward = 0.0;
  bool done = false;
  bool action_clipped = false;
  bool blocked = false;
};

std::vector<double> env_reset(const ContinuousEnv& env, std::uint64_t seed);
std::vector<double> env_reset(const ContinuousEnv& env, Rng& rng);

// Deterministic given noise_seed. Actions outside [-1, 1] are clipped and
// flagged. Throws on non-finite states.
StepResult env_step(const ContinuousEnv& env, std::span<const double> s, std::span<const double> a,
                    std::uint64_t noise_seed);
StepResult env_step(const ContinuousEnv& env, std::span<const double> s, std::span<const double> a,
                    Rng& noise);
// Noise-free transition, used by oracles and tests.
StepResult env_step_mean(const ContinuousEnv& env, std::span<const double> s,
                         std::span<const double> a);

bool segments_intersect(double ax, double ay, double bx, double by, const Wall& w);

// Termination rule applied to model-generated transitions. Model rollouts never
// call env_step; for pointmass2d a predicted reward at or below half the trap
// reward marks the trap terminal, pendulum1d never terminates.
bool model_terminal(const ContinuousEnv& env, double predicted_reward);

// Pendulum mechanical energy with th measured from the downward rest position.
double pendulum_energy(const ContinuousEnv& env, std::span<const double> s);

// Counts env_step calls; calls made inside an EvaluationScope are tallied
// separately so that training code can be audited for env access.
struct EnvStepCounts {
  std::uint64_t total = 0;
  std::uint64_t outside_evaluation = 0;
};
EnvStepCounts env_step_counts();
void reset_env_step_counts();

class EvaluationScope {
 public:
  EvaluationScope();
  ~EvaluationScope();
  EvaluationScope(const EvaluationScope&) = delete;
  EvaluationScope& operator=(const EvaluationScope&) = delete;
};

}  // namespace moan::env
