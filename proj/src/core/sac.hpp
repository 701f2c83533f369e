#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "adversarial.hpp"
#include "dataset.hpp"
#include "env.hpp"
#include "nn.hpp"
#include "penalty.hpp"
#include "rng.hpp"

namespace moan::sac {

using nn::Matrix;
using nn::Network;

struct PolicyTrainConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double lr_temperature = 3e-4;
  int batch_size = 256;
  double real_fraction = 0.05;
  int rollout_horizon = 5;
  int rollouts_per_epoch = 400;
  int epochs = 100;
  int updates_per_epoch = 1000;
  std::vector<int> hidden{64, 64};
  double init_temperature = 0.1;
  int eval_episodes = 10;
  int model_retention_epochs = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

// ---- squashed Gaussian ------------------------------------------------------

// head rows [0, d_a) mean, [d_a, 2 d_a) log-variance; u = mean + exp(lv / 2) eps,
// a = tanh(u), log_prob is the change-of-variables density of a (1 x B).
template <typename T>
struct SquashedSample {
  Matrix<T> action;
  Matrix<T> log_prob;
};

template <typename T>
SquashedSample<T> squash(const Matrix<T>& head, const Matrix<T>& eps);

// Gradient w.r.t. the head output given dL/daction and dL/dlog_prob.
template <typename T>
Matrix<T> squash_backward(const Matrix<T>& head, const Matrix<T>& eps, const SquashedSample<T>& sample,
                          const Matrix<T>& grad_action, const Matrix<T>& grad_log_prob);

// Log-density of a given action in (-1, 1)^d_a under the squashed Gaussian.
double squashed_log_density(std::span<const double> mean, std::span<const double> log_variance,
                            std::span<const double> action);

// ---- agent ------------------------------------------------------------------

struct ActionSample {
  std::vector<double> action;
  double log_prob = 0.0;
};

class SACAgent {
 public:
  SACAgent() = default;
  SACAgent(int d_s, int d_a, const std::vector<int>& hidden, double init_temperature, Rng& rng);

  Network<float> policy;
  Network<float> q1, q2, q1_target, q2_target;
  double log_alpha = 0.0;
  double target_entropy = 0.0;
  model::Normalizer state_norm;

  int d_s() const { return policy.spec().input_width(); }
  int d_a() const { return policy.spec().output_width() / 2; }

  Matrix<float> encode_states(const Matrix<float>& raw) const;
  ActionSample sample_action(std::span<const double> s, Rng& rng, bool deterministic) const;
  // Batched sampling on raw states (d_s x B).
  SquashedSample<float> act(const Matrix<float>& raw_states, Rng& rng, bool deterministic) const;
};

// ---- buffers ------------------------------------------------------------------

enum class BufferRole { env, model };

struct Batch {
  Matrix<float> s, a, s_next;
  Matrix<float> r, done;  // 1 x B
  Eigen::Index size() const { return r.cols(); }
};

class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(int d_s, int d_a, std::size_t capacity, BufferRole role);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  BufferRole role() const { return role_; }
  int d_s() const { return d_s_; }
  int d_a() const { return d_a_; }

  void add(std::span<const double> s, std::span<const double> a, std::span<const double> s_next, double r,
           bool done);
  void add(const data::Transition& t);
  // Record i in insertion order among the retained records (0 = oldest).
  data::Transition at(std::size_t i) const;

  // Uniform with replacement into columns [offset, offset + count) of out.
  void sample_into(Batch& out, Eigen::Index offset, Eigen::Index count, Rng& rng) const;

  static ReplayBuffer from_dataset(const data::TransitionDataset& ds, BufferRole role = BufferRole::env);

 private:
  std::size_t slot(std::size_t i) const { return (head_ + capacity_ - size_ + i) % capacity_; }

  int d_s_ = 0;
  int d_a_ = 0;
  std::size_t capacity_ = 0;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  BufferRole role_ = BufferRole::env;
  std::vector<float> s_, a_, s_next_, r_;
  std::vector<std::uint8_t> done_;
};

// ceil(f * batch) with a tolerance for representation error in f * batch.
int real_count(int batch_size, double real_fraction);

Batch mixed_batch(const ReplayBuffer& env_buf, const ReplayBuffer& model_buf, int batch_size, double real_fraction,
                  Rng& rng);

// ---- losses -------------------------------------------------------------------
// All inputs are already encoded: critic inputs are rows (encoded s, a).

// 0.5 * mean (Q(sa) - y)^2
template <typename T>
double critic_loss(const Network<T>& q, const Matrix<T>& sa, const Matrix<T>& y, std::span<T> grad);

// y = r + gamma (1 - done) (min(q1t, q2t)(s', a') - alpha log pi(a'|s')), a' from eps_next.
template <typename T>
Matrix<T> soft_target(const Network<T>& policy, const Network<T>& q1_target, const Network<T>& q2_target,
                      const Matrix<T>& s_next, const Matrix<T>& eps_next, const Matrix<T>& r,
                      const Matrix<T>& done, double gamma, double alpha);

template <typename T>
struct ActorLoss {
  double value = 0.0;
  double mean_log_prob = 0.0;
};

// mean(alpha log pi(a|s) - min(q1, q2)(s, a)) with a reparameterized by eps.
template <typename T>
ActorLoss<T> actor_loss(const Network<T>& policy, const Network<T>& q1, const Network<T>& q2, const Matrix<T>& s,
                        const Matrix<T>& eps, double alpha, std::span<T> grad);

// -mean(log_alpha * (log_prob + target_entropy)); grad w.r.t. log_alpha.
double temperature_loss(double log_alpha, std::span<const double> log_probs, double target_entropy,
                        double* grad = nullptr);

struct UpdateReport {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
  double temperature = 0.0;
  double alpha = 0.0;
};

class SACTrainer {
 public:
  SACTrainer(SACAgent& agent, const PolicyTrainConfig& cfg);
  UpdateReport update(const Batch& batch, Rng& rng);
  long updates() const { return updates_; }

 private:
  SACAgent& agent_;
  PolicyTrainConfig cfg_;
  nn::AdamState<float> opt_policy_, opt_q1_, opt_q2_;
  nn::AdamState<double> opt_alpha_;
  long updates_ = 0;
};

// ---- rollouts and training -------------------------------------------------

struct RolloutResult {
  std::vector<data::Transition> transitions;  // rewards are shaped
  std::vector<penalty::PenaltyBreakdown> breakdowns;
  std::vector<std::size_t> start_indices;
  int truncations = 0;
};

// Branch rollouts of length h from n_starts dataset states through the
// ensemble. Steps leaving 2x the env state box or going non-finite are
// dropped and end that branch.
RolloutResult rollout_branch(const SACAgent& agent, const model::DynamicsEnsemble& ensemble,
                             const model::Discriminator& disc, const penalty::PenaltyConfig& penalty_cfg,
                             const env::ContinuousEnv& env, const data::TransitionDataset& dataset, int h,
                             int n_starts, Rng& rng);

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;
};

// Deterministic-policy evaluation in the true env; env steps are tallied as
// evaluation steps.
EvalResult evaluate_policy(const env::ContinuousEnv& env, const SACAgent& agent, int episodes,
                           std::uint64_t seed);
EvalResult evaluate_policy(const env::ContinuousEnv& env,
                           const std::function<std::vector<double>(std::span<const double>, Rng&)>& policy,
                           int episodes, std::uint64_t seed);

double normalized_score(double j, double j_random, double j_expert);

struct EpochMetrics {
  int epoch = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
  double temperature = 0.0;
  double alpha = 0.0;
  int truncations = 0;
  std::size_t env_buffer_size = 0;
  std::size_t model_buffer_size = 0;
  double mean_shaped_reward = 0.0;
  double mean_penalty = 0.0;
};

struct PolicyTrainReport {
  std::vector<EpochMetrics> epochs;
  std::vector<penalty::PenaltyBreakdown> last_breakdowns;
  double wall_time = 0.0;
};

using PolicyEpochCallback = std::function<void(const EpochMetrics&)>;

// Offline stage: env_buffer is D_env, the model buffer is refilled each epoch
// from branch rollouts. The true env is used only by evaluate_policy.
PolicyTrainReport train_policy(SACAgent& agent, const data::TransitionDataset& dataset,
                               const model::DynamicsEnsemble& ensemble, const model::Discriminator& disc,
                               const penalty::PenaltyConfig& penalty_cfg, const env::ContinuousEnv& env,
                               const PolicyTrainConfig& cfg, const PolicyEpochCallback& on_epoch = {});

SACAgent make_offline_agent(const data::TransitionDataset& dataset, const PolicyTrainConfig& cfg);

// ---- online SAC (dataset construction and sanity runs) ------------------------

struct OnlineConfig {
  int total_steps = 30000;
  int warmup_steps = 2000;
  int eval_every = 1000;
  int eval_episodes = 5;
  int updates_per_step = 1;
};

struct OnlineSnapshot {
  int step = 0;
  double eval_return = 0.0;
  std::vector<float> policy_params;
  std::size_t replay_size = 0;  // transitions collected when the snapshot was taken
};

struct OnlineResult {
  SACAgent agent;
  ReplayBuffer replay;
  std::vector<OnlineSnapshot> snapshots;
};

OnlineResult train_online(const env::ContinuousEnv& env, const PolicyTrainConfig& cfg, const OnlineConfig& online);

}  // namespace moan::sac
