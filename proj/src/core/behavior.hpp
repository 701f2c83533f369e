#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "env.hpp"
#include "sac.hpp"

namespace moan::behavior {

// Policies and data from one online SAC run, used to build the medium,
// medium-replay and medium-expert datasets.
struct BehaviorBundle {
  std::string env_id;
  sac::SACAgent medium;  // policy and state normalizer only
  sac::SACAgent expert;
  double medium_return = 0.0;
  double expert_return = 0.0;
  int medium_step = 0;
  int expert_step = 0;
  std::vector<std::pair<int, double>> eval_history;  // (env step, deterministic eval return)
  std::vector<sac::SACAgent> pre_medium;               // snapshots taken before the medium one
  data::TransitionDataset replay;                      // online replay up to the medium snapshot
};

// Medium = snapshot whose return is closest to a third of the best, expert =
// best snapshot (earliest on ties).
BehaviorBundle train_behavior(const env::ContinuousEnv& env, const sac::PolicyTrainConfig& cfg,
                              const sac::OnlineConfig& online);

void save_bundle(const BehaviorBundle& b, const std::filesystem::path& dir);
BehaviorBundle load_bundle(const std::filesystem::path& dir);
bool bundle_exists(const std::filesystem::path& dir);

using PolicyFn = std::function<std::vector<double>(std::span<const double>, Rng&)>;

PolicyFn uniform_policy(int action_dim);
// Stochastic squashed-Gaussian behavior.
PolicyFn agent_policy(const sac::SACAgent& agent);

struct Collected {
  data::TransitionDataset data;
  std::vector<double> episode_returns;  // completed episodes
};

// Exactly n transitions from consecutive episodes; policies are used
// round-robin per episode.
Collected collect_transitions(const env::ContinuousEnv& env, const std::vector<PolicyFn>& policies, std::size_t n,
                              Rng& rng);

// Pure function of its arguments. medium, medium-replay and medium-expert need
// a behavior bundle; passing none throws missing_artifact with instructions.
data::TransitionDataset generate_dataset(const env::ContinuousEnv& env, data::BehaviorTag tag, std::size_t n_steps,
                                         std::uint64_t seed, const BehaviorBundle* bundle = nullptr);

}  // namespace moan::behavior
