#include "env.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "error.hpp"

namespace moan::env {

namespace {

std::atomic<std::uint64_t> g_total_steps{0};
std::atomic<std::uint64_t> g_training_steps{0};
thread_local int t_evaluation_depth = 0;

double cross(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

double wrap_angle(double th) {
  th = std::fmod(th + std::numbers::pi, 2.0 * std::numbers::pi);
  if (th < 0) th += 2.0 * std::numbers::pi;
  return th - std::numbers::pi;
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorCode::non_finite, std::string("env_step: non-finite ") + what);
  }
}

struct NoiseSource {
  Rng* rng;
  double next(double std) { return rng ? std * rng->normal() : 0.0; }
};

StepResult step_pointmass(const ContinuousEnv& env, std::span<const double> s,
                          const std::vector<double>& a, NoiseSource noise) {
  StepResult out;
  const double x = s[0], y = s[1];
  double vx = std::clamp(env.velocity_decay * s[2] + env.accel * a[0], -1.0, 1.0);
  double vy = std::clamp(env.velocity_decay * s[3] + env.accel * a[1], -1.0, 1.0);
  double nx = x + env.dt * vx;
  double ny = y + env.dt * vy;
  nx += noise.next(env.noise_std);
  ny += noise.next(env.noise_std);
  vx += noise.next(env.noise_std);
  vy += noise.next(env.noise_std);
  nx = std::clamp(nx, env.state_low[0], env.state_high[0]);
  ny = std::clamp(ny, env.state_low[1], env.state_high[1]);
  vx = std::clamp(vx, env.state_low[2], env.state_high[2]);
  vy = std::clamp(vy, env.state_low[3], env.state_high[3]);

  bool trapped = false;
  for (const Wall& w : env.walls) {
    if (segments_intersect(x, y, nx, ny, w)) {
      out.blocked = true;
      trapped = trapped || w.trap;
    }
  }
  if (out.blocked) {
    nx = x;
    ny = y;
    vx = 0.0;
    vy = 0.0;
  }
  out.next_state = {nx, ny, vx, vy};
  const double dx = nx - env.goal[0];
  const double dy = ny - env.goal[1];
  out.reward = 1.0 - std::sqrt(dx * dx + dy * dy) / env.reward_radius;
  if (out.blocked) out.reward -= env.bump_penalty;
  if (trapped) {
    out.reward = env.trap_reward;
    out.done = true;
  }
  return out;
}

StepResult step_pendulum(const ContinuousEnv& env, std::span<const double> s,
                         const std::vector<double>& a, NoiseSource noise) {
  StepResult out;
  const double th = std::atan2(s[1], s[0]);
  const double inertia = env.mass * env.length * env.length;
  const double acc = -(env.gravity / env.length) * std::sin(th) + env.torque_scale * a[0] / inertia;
  double th_dot = s[2] + env.dt * acc;
  th_dot = std::clamp(th_dot, -env.max_speed, env.max_speed);
  double th_next = th + env.dt * th_dot;
  th_next += noise.next(env.noise_std);
  th_dot = std::clamp(th_dot + noise.next(env.noise_std), -env.max_speed, env.max_speed);
  th_next = wrap_angle(th_next);
  out.next_state = {std::cos(th_next), std::sin(th_next), th_dot};
  out.reward = 0.5 * (1.0 - std::cos(th_next)) - env.torque_cost * a[0] * a[0];
  return out;
}

StepResult step_impl(const ContinuousEnv& env, std::span<const double> s,
                     std::span<const double> a, NoiseSource noise) {
  require(static_cast<int>(s.size()) == env.state_dim, ErrorCode::dimension_mismatch,
          "env_step: state dimension mismatch");
  require(static_cast<int>(a.size()) == env.action_dim, ErrorCode::dimension_mismatch,
          "env_step: action dimension mismatch");
  check_finite(s, "state");
  check_finite(a, "action");
  g_total_steps.fetch_add(1, std::memory_order_relaxed);
  if (t_evaluation_depth == 0) g_training_steps.fetch_add(1, std::memory_order_relaxed);

  std::vector<double> clipped(a.begin(), a.end());
  bool was_clipped = false;
  for (double& v : clipped) {
    const double c = std::clamp(v, -1.0, 1.0);
    was_clipped = was_clipped || c != v;
    v = c;
  }
  StepResult out = env.kind == EnvKind::pointmass2d ? step_pointmass(env, s, clipped, noise)
                                                    : step_pendulum(env, s, clipped, noise);
  out.action_clipped = was_clipped;
  check_finite(out.next_state, "next state");
  return out;
}

}  // namespace

std::string to_string(EnvKind kind) {
  return kind == EnvKind::pointmass2d ? "pointmass2d" : "pendulum1d";
}

EnvKind env_kind_from_string(const std::string& s) {
  if (s == "pointmass2d") return EnvKind::pointmass2d;
  if (s == "pendulum1d") return EnvKind::pendulum1d;
  fail(ErrorCode::invalid_argument, "unknown env kind '" + s + "'");
}

ContinuousEnv ContinuousEnv::make(EnvKind kind) {
  ContinuousEnv env;
  env.kind = kind;
  if (kind == EnvKind::pointmass2d) {
    env.state_dim = 4;
    env.action_dim = 2;
    env.state_low = {-1.0, -1.0, -1.0, -1.0};
    env.state_high = {1.0, 1.0, 1.0, 1.0};
    env.start_box = {-0.9, -0.7, -0.9, -0.7};
    env.goal = {0.7, 0.7};
    // The trap wall cuts the straight start-to-goal line; the safe routes go
    // around either end.
    env.walls = {Wall{-0.4, 0.4, 0.4, -0.4, true}};
  } else {
    env.state_dim = 3;
    env.action_dim = 1;
    env.dt = 0.05;
    env.state_low = {-1.0, -1.0, -env.max_speed};
    env.state_high = {1.0, 1.0, env.max_speed};
  }
  return env;
}

bool ContinuousEnv::in_box(std::span<const double> s, double scale) const {
  for (int i = 0; i < state_dim; ++i) {
    const double center = 0.5 * (state_low[i] + state_high[i]);
    const double half = 0.5 * (state_high[i] - state_low[i]) * scale;
    if (!std::isfinite(s[i]) || s[i] < center - half || s[i] > center + half) return false;
  }
  return true;
}

bool segments_intersect(double ax, double ay, double bx, double by, const Wall& w) {
  const double rx = bx - ax, ry = by - ay;
  const double sx = w.x1 - w.x0, sy = w.y1 - w.y0;
  const double denom = cross(rx, ry, sx, sy);
  const double qpx = w.x0 - ax, qpy = w.y0 - ay;
  if (denom == 0.0) {
    // Parallel: only collinear overlap counts.
    if (cross(qpx, qpy, rx, ry) != 0.0) return false;
    const double rr = rx * rx + ry * ry;
    if (rr == 0.0) return false;
    const double t0 = (qpx * rx + qpy * ry) / rr;
    const double t1 = t0 + (sx * rx + sy * ry) / rr;
    return std::max(t0, t1) >= 0.0 && std::min(t0, t1) <= 1.0;
  }
  const double t = cross(qpx, qpy, sx, sy) / denom;
  const double u = cross(qpx, qpy, rx, ry) / denom;
  return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

std::vector<double> env_reset(const ContinuousEnv& env, std::uint64_t seed) {
  Rng rng(seed);
  return env_reset(env, rng);
}

std::vector<double> env_reset(const ContinuousEnv& env, Rng& rng) {
  if (env.kind == EnvKind::pointmass2d) {
    const double x = rng.uniform(env.start_box[0], env.start_box[1]);
    const double y = rng.uniform(env.start_box[2], env.start_box[3]);
    return {x, y, 0.0, 0.0};
  }
  const double th = rng.uniform(-env.init_spread, env.init_spread);
  const double th_dot = rng.uniform(-env.init_spread, env.init_spread);
  return {std::cos(th), std::sin(th), th_dot};
}

StepResult env_step(const ContinuousEnv& env, std::span<const double> s, std::span<const double> a,
                    std::uint64_t noise_seed) {
  Rng rng(noise_seed);
  return step_impl(env, s, a, NoiseSource{&rng});
}

StepResult env_step(const ContinuousEnv& env, std::span<const double> s, std::span<const double> a,
                    Rng& noise) {
  return step_impl(env, s, a, NoiseSource{&noise});
}

StepResult env_step_mean(const ContinuousEnv& env, std::span<const double> s,
                         std::span<const double> a) {
  return step_impl(env, s, a, NoiseSource{nullptr});
}

bool model_terminal(const ContinuousEnv& env, double predicted_reward) {
  return env.kind == EnvKind::pointmass2d && predicted_reward <= 0.5 * env.trap_reward;
}

double pendulum_energy(const ContinuousEnv& env, std::span<const double> s) {
  const double th = std::atan2(s[1], s[0]);
  const double inertia = env.mass * env.length * env.length;
  return 0.5 * inertia * s[2] * s[2] + env.mass * env.gravity * env.length * (1.0 - std::cos(th));
}

EnvStepCounts env_step_counts() {
  return {g_total_steps.load(), g_training_steps.load()};
}

void reset_env_step_counts() {
  g_total_steps = 0;
  g_training_steps = 0;
}

EvaluationScope::EvaluationScope() { ++t_evaluation_depth; }
EvaluationScope::~EvaluationScope() { --t_evaluation_depth; }

}  // namespace moan::env
