#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "env.hpp"
#include "error.hpp"

using namespace moan;
using env::ContinuousEnv;
using env::EnvKind;

namespace {

// Orientation-based segment test, written independently of the library's
// parametric version.
int orient(double ax, double ay, double bx, double by, double cx, double cy) {
  const double v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
  return (v > 0) - (v < 0);
}

bool on_segment(double ax, double ay, double bx, double by, double px, double py) {
  return std::min(ax, bx) <= px && px <= std::max(ax, bx) && std::min(ay, by) <= py && py <= std::max(ay, by);
}

bool crosses(double ax, double ay, double bx, double by, const env::Wall& w) {
  const int o1 = orient(ax, ay, bx, by, w.x0, w.y0);
  const int o2 = orient(ax, ay, bx, by, w.x1, w.y1);
  const int o3 = orient(w.x0, w.y0, w.x1, w.y1, ax, ay);
  const int o4 = orient(w.x0, w.y0, w.x1, w.y1, bx, by);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(ax, ay, bx, by, w.x0, w.y0)) return true;
  if (o2 == 0 && on_segment(ax, ay, bx, by, w.x1, w.y1)) return true;
  if (o3 == 0 && on_segment(w.x0, w.y0, w.x1, w.y1, ax, ay)) return true;
  if (o4 == 0 && on_segment(w.x0, w.y0, w.x1, w.y1, bx, by)) return true;
  return false;
}

}  // namespace

TEST_CASE("pointmass reset stays inside the start box and is seed-deterministic") {
  const auto e = ContinuousEnv::make(EnvKind::pointmass2d);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto s = env::env_reset(e, seed);
    REQUIRE(s.size() == 4);
    CHECK(s[0] >= e.start_box[0]);
    CHECK(s[0] <= e.start_box[1]);
    CHECK(s[1] >= e.start_box[2]);
    CHECK(s[1] <= e.start_box[3]);
    CHECK(s[2] == 0.0);
    CHECK(s[3] == 0.0);
    CHECK(s == env::env_reset(e, seed));
  }
}

TEST_CASE("pendulum reset angle mean matches the uniform start distribution") {
  const auto e = ContinuousEnv::make(EnvKind::pendulum1d);
  Rng rng(17);
  const int n = 100000;
  double sum = 0.0, sum_dot = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto s = env::env_reset(e, rng);
    CHECK(std::hypot(s[0], s[1]) == doctest::Approx(1.0));
    sum += std::atan2(s[1], s[0]);
    sum_dot += s[2];
  }
  // U(-w, w): mean 0, std w / sqrt(3).
  const double sd = e.init_spread / std::sqrt(3.0);
  CHECK(std::abs(sum / n) < 3.0 * sd / std::sqrt(n));
  CHECK(std::abs(sum_dot / n) < 3.0 * sd / std::sqrt(n));
}

TEST_CASE("pointmass at rest with zero action does not drift") {
  const auto e = ContinuousEnv::make(EnvKind::pointmass2d);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> s{rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0, 0.0};
    const auto r = env::env_step_mean(e, s, std::vector<double>{0.0, 0.0});
    CHECK(r.next_state == s);
    CHECK_FALSE(r.blocked);
  }
}

TEST_CASE("stepping into a wall leaves the position unchanged and costs the bump penalty") {
  auto e = ContinuousEnv::make(EnvKind::pointmass2d);
  e.walls = {env::Wall{0.0, -1.0, 0.0, 1.0, false}};
  const std::vector<double> s{-0.01, 0.2, 1.0, 0.0};
  const auto r = env::env_step_mean(e, s, std::vector<double>{1.0, 0.0});
  CHECK(r.blocked);
  CHECK_FALSE(r.done);
  CHECK(r.next_state[0] == s[0]);
  CHECK(r.next_state[1] == s[1]);
  const double dist = std::hypot(s[0] - e.goal[0], s[1] - e.goal[1]);
  CHECK(r.reward == doctest::Approx(1.0 - dist / e.reward_radius - e.bump_penalty));
}

TEST_CASE("the trap wall ends the episode with the trap reward") {
  const auto e = ContinuousEnv::make(EnvKind::pointmass2d);
  // Just below-left of the diagonal trap wall, moving up-right across it.
  const std::vector<double> s{-0.01, -0.01, 1.0, 1.0};
  const auto r = env::env_step_mean(e, s, std::vector<double>{1.0, 1.0});
  CHECK(r.blocked);
  CHECK(r.done);
  CHECK(r.reward == e.trap_reward);
  CHECK(env::model_terminal(e, r.reward));
  CHECK_FALSE(env::model_terminal(e, 0.0));
  CHECK_FALSE(env::model_terminal(ContinuousEnv::make(EnvKind::pendulum1d), -100.0));
}

TEST_CASE("fuzz: a pointmass step never crosses a wall segment") {
  const auto e = ContinuousEnv::make(EnvKind::pointmass2d);
  Rng rng(2024);
  int blocked = 0;
  for (int i = 0; i < 100000; ++i) {
    const std::vector<double> s{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const std::vector<double> a{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto r = env::env_step(e, s, a, rng);
    blocked += r.blocked;
    for (const auto& w : e.walls) {
      if (r.blocked) {
        CHECK(r.next_state[0] == s[0]);
        CHECK(r.next_state[1] == s[1]);
      } else {
        CHECK_FALSE(crosses(s[0], s[1], r.next_state[0], r.next_state[1], w));
      }
    }
  }
  CHECK(blocked > 0);
}

TEST_CASE("segments_intersect agrees with the orientation oracle") {
  Rng rng(5);
  for (int i = 0; i < 20000; ++i) {
    const env::Wall w{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double ax = rng.uniform(-1, 1), ay = rng.uniform(-1, 1), bx = rng.uniform(-1, 1), by = rng.uniform(-1, 1);
    CHECK(env::segments_intersect(ax, ay, bx, by, w) == crosses(ax, ay, bx, by, w));
  }
  const env::Wall w{0, 0, 1, 0};
  CHECK(env::segments_intersect(0.5, -1, 0.5, 0, w));    // touching endpoint
  CHECK(env::segments_intersect(-1, 0, 0.5, 0, w));      // collinear overlap
  CHECK_FALSE(env::segments_intersect(2, 0, 3, 0, w));   // collinear, disjoint
  CHECK_FALSE(env::segments_intersect(0, 1, 1, 1, w));   // parallel
}

TEST_CASE("zero-torque zero-noise pendulum step matches a symplectic Euler oracle") {
  const auto e = ContinuousEnv::make(EnvKind::pendulum1d);
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double th = rng.uniform(-3.0, 3.0);
    const double w = rng.uniform(-4.0, 4.0);
    const std::vector<double> s{std::cos(th), std::sin(th), w};
    const auto r = env::env_step_mean(e, s, std::vector<double>{0.0});
    const double w1 = w - e.dt * (e.gravity / e.length) * std::sin(th);
    const double th1 = th + e.dt * w1;
    const double energy = 0.5 * e.mass * e.length * e.length * w1 * w1 + e.mass * e.gravity * e.length * (1 - std::cos(th1));
    CHECK(std::abs(env::pendulum_energy(e, r.next_state) - energy) < 1e-10);
    CHECK(r.next_state[0] == doctest::Approx(std::cos(th1)).epsilon(1e-12));
    CHECK(r.next_state[1] == doctest::Approx(std::sin(th1)).epsilon(1e-12));
    CHECK(r.reward == doctest::Approx(0.5 * (1 - std::cos(th1))));
  }
}

TEST_CASE("actions outside [-1, 1] are clipped and flagged") {
  const auto e = ContinuousEnv::make(EnvKind::pendulum1d);
  const std::vector<double> s{1.0, 0.0, 0.0};
  const auto big = env::env_step_mean(e, s, std::vector<double>{5.0});
  const auto one = env::env_step_mean(e, s, std::vector<double>{1.0});
  CHECK(big.action_clipped);
  CHECK_FALSE(one.action_clipped);
  CHECK(big.next_state == one.next_state);
}

TEST_CASE("env_step is deterministic in its noise seed and rejects bad input") {
  const auto e = ContinuousEnv::make(EnvKind::pointmass2d);
  const std::vector<double> s{0.1, 0.2, 0.0, 0.0}, a{0.5, -0.5};
  CHECK(env::env_step(e, s, a, 99).next_state == env::env_step(e, s, a, 99).next_state);
  CHECK(env::env_step(e, s, a, 99).next_state != env::env_step(e, s, a, 100).next_state);
  const std::vector<double> bad{NAN, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(env::env_step_mean(e, bad, a), Error);
  CHECK_THROWS_AS(env::env_step_mean(e, std::vector<double>{0.0, 0.0}, a), Error);
}

TEST_CASE("env step counter separates evaluation from training access") {
  const auto e = ContinuousEnv::make(EnvKind::pendulum1d);
  const std::vector<double> s{1.0, 0.0, 0.0}, a{0.0};
  env::reset_env_step_counts();
  env::env_step_mean(e, s, a);
  {
    env::EvaluationScope scope;
    env::env_step_mean(e, s, a);
    env::env_step_mean(e, s, a);
  }
  const auto c = env::env_step_counts();
  CHECK(c.total == 3);
  CHECK(c.outside_evaluation == 1);
}
