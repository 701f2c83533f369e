#include "sac.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "error.hpp"

namespace moan::sac {

namespace {

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(1 - tanh(u)^2), stable for large |u|.
template <typename T>
T log_one_minus_tanh_sq(T u) {
  return T(2) * (T(std::numbers::ln2) - u - softplus(T(-2) * u));
}

template <typename T>
Matrix<T> stack(const Matrix<T>& top, const Matrix<T>& bottom) {
  Matrix<T> out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

template <typename T>
Matrix<T> normals(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<T>(rng.normal());
  }
  return m;
}

}  // namespace

void PolicyTrainConfig::validate() const {
  require(gamma > 0.0 && gamma < 1.0, ErrorCode::invalid_argument, "policy.gamma must lie in (0, 1)");
  require(tau > 0.0 && tau <= 1.0, ErrorCode::invalid_argument, "policy.tau must lie in (0, 1]");
  require(lr_actor > 0.0 && lr_critic > 0.0 && lr_temperature > 0.0, ErrorCode::invalid_argument,
          "policy learning rates must be positive");
  require(batch_size >= 1, ErrorCode::invalid_argument, "policy.batch_size must be >= 1");
  require(real_fraction >= 0.0 && real_fraction <= 1.0, ErrorCode::invalid_argument,
          "policy.real_fraction must lie in [0, 1]");
  require(rollout_horizon >= 1, ErrorCode::invalid_argument, "policy.rollout_horizon must be >= 1");
  require(rollouts_per_epoch >= 1, ErrorCode::invalid_argument, "policy.rollouts_per_epoch must be >= 1");
  require(epochs >= 1, ErrorCode::invalid_argument, "policy.epochs must be >= 1");
  require(updates_per_epoch >= 0, ErrorCode::invalid_argument, "policy.updates_per_epoch must be >= 0");
  require(!hidden.empty(), ErrorCode::invalid_argument, "policy.hidden needs at least one layer");
  require(init_temperature > 0.0, ErrorCode::invalid_argument, "policy.init_temperature must be positive");
  require(eval_episodes >= 1, ErrorCode::invalid_argument, "policy.eval_episodes must be >= 1");
  require(model_retention_epochs >= 1, ErrorCode::invalid_argument,
          "policy.model_retention_epochs must be >= 1");
}

template <typename T>
SquashedSample<T> squash(const Matrix<T>& head, const Matrix<T>& eps) {
  const Eigen::Index d = head.rows() / 2;
  require(eps.rows() == d && eps.cols() == head.cols(), ErrorCode::dimension_mismatch,
          "squash: noise shape does not match the policy head");
  SquashedSample<T> out;
  out.action.resize(d, head.cols());
  out.log_prob.setZero(1, head.cols());
  const T half_log_2pi = T(0.5 * std::log(2.0 * std::numbers::pi));
  for (Eigen::Index j = 0; j < head.cols(); ++j) {
    T lp = T(0);
    for (Eigen::Index i = 0; i < d; ++i) {
      const T lv = head(d + i, j);
      const T e = eps(i, j);
      const T u = head(i, j) + std::exp(T(0.5) * lv) * e;
      out.action(i, j) = std::tanh(u);
      lp += T(-0.5) * e * e - half_log_2pi - T(0.5) * lv - log_one_minus_tanh_sq(u);
    }
    out.log_prob(0, j) = lp;
  }
  return out;
}

template <typename T>
Matrix<T> squash_backward(const Matrix<T>& head, const Matrix<T>& eps, const SquashedSample<T>& sample,
                          const Matrix<T>& grad_action, const Matrix<T>& grad_log_prob) {
  const Eigen::Index d = head.rows() / 2;
  Matrix<T> g(head.rows(), head.cols());
  for (Eigen::Index j = 0; j < head.cols(); ++j) {
    const T glp = grad_log_prob(0, j);
    for (Eigen::Index i = 0; i < d; ++i) {
      const T a = sample.action(i, j);
      const T sd = std::exp(T(0.5) * head(d + i, j));
      // d log_prob / du = 2 tanh(u); d log_prob / dlv (direct) = -1/2
      const T gu = grad_action(i, j) * (T(1) - a * a) + T(2) * a * glp;
      g(i, j) = gu;
      g(d + i, j) = gu * T(0.5) * sd * eps(i, j) - T(0.5) * glp;
    }
  }
  return g;
}

double squashed_log_density(std::span<const double> mean, std::span<const double> log_variance,
                            std::span<const double> action) {
  double lp = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) {
    require(action[i] > -1.0 && action[i] < 1.0, ErrorCode::invalid_argument,
            "squashed_log_density: action must lie in (-1, 1)");
    const double u = std::atanh(action[i]);
    const double var = std::exp(log_variance[i]);
    const double z = u - mean[i];
    lp += -0.5 * z * z / var - 0.5 * std::log(2.0 * std::numbers::pi * var) - std::log1p(-action[i] * action[i]);
  }
  return lp;
}

template SquashedSample<float> squash(const Matrix<float>&, const Matrix<float>&);
template SquashedSample<double> squash(const Matrix<double>&, const Matrix<double>&);
template Matrix<float> squash_backward(const Matrix<float>&, const Matrix<float>&, const SquashedSample<float>&,
                                       const Matrix<float>&, const Matrix<float>&);
template Matrix<double> squash_backward(const Matrix<double>&, const Matrix<double>&,
                                        const SquashedSample<double>&, const Matrix<double>&,
                                        const Matrix<double>&);

SACAgent::SACAgent(int d_s, int d_a, const std::vector<int>& hidden, double init_temperature, Rng& rng)
    : policy(nn::NetSpec::mlp(d_s, hidden, 2 * d_a, nn::OutputHead::gaussian_diag)),
      q1(nn::NetSpec::mlp(d_s + d_a, hidden, 1, nn::OutputHead::linear)),
      q2(q1.spec()),
      log_alpha(std::log(init_temperature)),
      target_entropy(-static_cast<double>(d_a)) {
  policy.init_uniform(rng);
  q1.init_uniform(rng);
  q2.init_uniform(rng);
  q1_target = q1;
  q2_target = q2;
  state_norm.mean.assign(d_s, 0.0);
  state_norm.stdev.assign(d_s, 1.0);
}

Matrix<float> SACAgent::encode_states(const Matrix<float>& raw) const {
  require(raw.rows() == d_s(), ErrorCode::dimension_mismatch, "agent: state dimension mismatch");
  Matrix<float> out(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      out(i, j) = static_cast<float>(state_norm.encode(static_cast<std::size_t>(i), raw(i, j)));
    }
  }
  return out;
}

SquashedSample<float> SACAgent::act(const Matrix<float>& raw_states, Rng& rng, bool deterministic) const {
  const Matrix<float> head = policy.forward(encode_states(raw_states));
  const Matrix<float> eps = deterministic ? Matrix<float>(Matrix<float>::Zero(d_a(), raw_states.cols()))
                                          : normals<float>(d_a(), raw_states.cols(), rng);
  return squash<float>(head, eps);
}

ActionSample SACAgent::sample_action(std::span<const double> s, Rng& rng, bool deterministic) const {
  require(static_cast<int>(s.size()) == d_s(), ErrorCode::dimension_mismatch, "sample_action: state dimension");
  Matrix<float> x(d_s(), 1);
  for (int i = 0; i < d_s(); ++i) {
    require(std::isfinite(s[i]), ErrorCode::non_finite, "sample_action: non-finite state");
    x(i, 0) = static_cast<float>(s[i]);
  }
  const SquashedSample<float> smp = act(x, rng, deterministic);
  ActionSample out;
  for (int i = 0; i < d_a(); ++i) out.action.push_back(smp.action(i, 0));
  out.log_prob = smp.log_prob(0, 0);
  return out;
}

ReplayBuffer::ReplayBuffer(int d_s, int d_a, std::size_t capacity, BufferRole role)
    : d_s_(d_s), d_a_(d_a), capacity_(capacity), role_(role) {
  require(capacity >= 1, ErrorCode::invalid_argument, "replay buffer capacity must be >= 1");
  s_.resize(capacity * d_s);
  a_.resize(capacity * d_a);
  s_next_.resize(capacity * d_s);
  r_.resize(capacity);
  done_.resize(capacity);
}

void ReplayBuffer::add(std::span<const double> s, std::span<const double> a, std::span<const double> s_next,
                       double r, bool done) {
  require(static_cast<int>(s.size()) == d_s_ && static_cast<int>(a.size()) == d_a_ &&
              static_cast<int>(s_next.size()) == d_s_,
          ErrorCode::dimension_mismatch, "replay buffer: transition dimension mismatch");
  const std::size_t k = head_;
  for (int i = 0; i < d_s_; ++i) {
    s_[k * d_s_ + i] = static_cast<float>(s[i]);
    s_next_[k * d_s_ + i] = static_cast<float>(s_next[i]);
  }
  for (int i = 0; i < d_a_; ++i) a_[k * d_a_ + i] = static_cast<float>(a[i]);
  r_[k] = static_cast<float>(r);
  done_[k] = done ? 1 : 0;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

void ReplayBuffer::add(const data::Transition& t) {
  const std::vector<double> s(t.s.begin(), t.s.end()), a(t.a.begin(), t.a.end()),
      sn(t.s_next.begin(), t.s_next.end());
  add(s, a, sn, t.r, t.done);
}

data::Transition ReplayBuffer::at(std::size_t i) const {
  require(i < size_, ErrorCode::invalid_argument, "replay buffer index out of range");
  const std::size_t k = slot(i);
  data::Transition t;
  t.s.assign(s_.begin() + k * d_s_, s_.begin() + (k + 1) * d_s_);
  t.a.assign(a_.begin() + k * d_a_, a_.begin() + (k + 1) * d_a_);
  t.s_next.assign(s_next_.begin() + k * d_s_, s_next_.begin() + (k + 1) * d_s_);
  t.r = r_[k];
  t.done = done_[k] != 0;
  return t;
}

void ReplayBuffer::sample_into(Batch& out, Eigen::Index offset, Eigen::Index count, Rng& rng) const {
  if (count == 0) return;
  require(size_ > 0, ErrorCode::invalid_argument, "cannot sample from an empty replay buffer");
  for (Eigen::Index j = offset; j < offset + count; ++j) {
    const std::size_t k = slot(rng.below(size_));
    for (int i = 0; i < d_s_; ++i) {
      out.s(i, j) = s_[k * d_s_ + i];
      out.s_next(i, j) = s_next_[k * d_s_ + i];
    }
    for (int i = 0; i < d_a_; ++i) out.a(i, j) = a_[k * d_a_ + i];
    out.r(0, j) = r_[k];
    out.done(0, j) = done_[k];
  }
}

ReplayBuffer ReplayBuffer::from_dataset(const data::TransitionDataset& ds, BufferRole role) {
  ReplayBuffer buf(ds.d_s(), ds.d_a(), std::max<std::size_t>(ds.size(), 1), role);
  for (std::size_t i = 0; i < ds.size(); ++i) buf.add(ds.at(i));
  return buf;
}

int real_count(int batch_size, double real_fraction) {
  return std::clamp(static_cast<int>(std::ceil(real_fraction * batch_size - 1e-9)), 0, batch_size);
}

Batch mixed_batch(const ReplayBuffer& env_buf, const ReplayBuffer& model_buf, int batch_size, double real_fraction,
                  Rng& rng) {
  require(batch_size >= 1, ErrorCode::invalid_argument, "mixed_batch: batch size must be >= 1");
  const int n_real = real_count(batch_size, real_fraction);
  const int n_model = batch_size - n_real;
  require(n_real == 0 || env_buf.size() > 0, ErrorCode::invalid_argument,
          "mixed_batch: env buffer is empty but the batch needs real records");
  require(n_model == 0 || model_buf.size() > 0, ErrorCode::invalid_argument,
          "mixed_batch: model buffer is empty but the batch needs model records");
  const int d_s = env_buf.d_s(), d_a = env_buf.d_a();
  Batch b;
  b.s.resize(d_s, batch_size);
  b.a.resize(d_a, batch_size);
  b.s_next.resize(d_s, batch_size);
  b.r.resize(1, batch_size);
  b.done.resize(1, batch_size);
  env_buf.sample_into(b, 0, n_real, rng);
  model_buf.sample_into(b, n_real, n_model, rng);
  return b;
}

template <typename T>
double critic_loss(const Network<T>& q, const Matrix<T>& sa, const Matrix<T>& y, std::span<T> grad) {
  nn::Tape<T> tape;
  const Matrix<T> pred = q.forward(sa, tape);
  const Matrix<T> diff = pred - y;
  const auto b = static_cast<double>(sa.cols());
  const double loss = 0.5 * diff.template cast<double>().squaredNorm() / b;
  if (!grad.empty()) q.backward(tape, Matrix<T>(diff / static_cast<T>(b)), grad);
  return loss;
}

template <typename T>
Matrix<T> soft_target(const Network<T>& policy, const Network<T>& q1_target, const Network<T>& q2_target,
                      const Matrix<T>& s_next, const Matrix<T>& eps_next, const Matrix<T>& r,
                      const Matrix<T>& done, double gamma, double alpha) {
  const SquashedSample<T> next = squash<T>(policy.forward(s_next), eps_next);
  const Matrix<T> sa = stack<T>(s_next, next.action);
  const Matrix<T> qa = q1_target.forward(sa);
  const Matrix<T> qb = q2_target.forward(sa);
  Matrix<T> y(1, r.cols());
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    const double soft_v = std::min<double>(qa(0, j), qb(0, j)) - alpha * next.log_prob(0, j);
    y(0, j) = static_cast<T>(r(0, j) + gamma * (1.0 - done(0, j)) * soft_v);
  }
  return y;
}

template <typename T>
ActorLoss<T> actor_loss(const Network<T>& policy, const Network<T>& q1, const Network<T>& q2, const Matrix<T>& s,
                        const Matrix<T>& eps, double alpha, std::span<T> grad) {
  nn::Tape<T> tape, tape1, tape2;
  const Matrix<T> head = policy.forward(s, tape);
  const SquashedSample<T> smp = squash<T>(head, eps);
  const Matrix<T> sa = stack<T>(s, smp.action);
  const Matrix<T> qa = q1.forward(sa, tape1);
  const Matrix<T> qb = q2.forward(sa, tape2);
  const Eigen::Index b = s.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  Matrix<T> g1 = Matrix<T>::Zero(1, b), g2 = Matrix<T>::Zero(1, b);
  ActorLoss<T> out;
  for (Eigen::Index j = 0; j < b; ++j) {
    const bool first = qa(0, j) <= qb(0, j);
    const double qmin = first ? qa(0, j) : qb(0, j);
    out.value += (alpha * smp.log_prob(0, j) - qmin) * inv_b;
    out.mean_log_prob += smp.log_prob(0, j) * inv_b;
    (first ? g1 : g2)(0, j) = static_cast<T>(-inv_b);
  }
  if (!grad.empty()) {
    const Matrix<T> gx = q1.backward(tape1, g1, std::span<T>{}) + q2.backward(tape2, g2, std::span<T>{});
    const Matrix<T> g_action = gx.bottomRows(smp.action.rows());
    const Matrix<T> g_lp = Matrix<T>::Constant(1, b, static_cast<T>(alpha * inv_b));
    policy.backward(tape, squash_backward<T>(head, eps, smp, g_action, g_lp), grad);
  }
  return out;
}

template double critic_loss(const Network<float>&, const Matrix<float>&, const Matrix<float>&, std::span<float>);
template double critic_loss(const Network<double>&, const Matrix<double>&, const Matrix<double>&, std::span<double>);
template Matrix<float> soft_target(const Network<float>&, const Network<float>&, const Network<float>&,
                                   const Matrix<float>&, const Matrix<float>&, const Matrix<float>&,
                                   const Matrix<float>&, double, double);
template Matrix<double> soft_target(const Network<double>&, const Network<double>&, const Network<double>&,
                                    const Matrix<double>&, const Matrix<double>&, const Matrix<double>&,
                                    const Matrix<double>&, double, double);
template ActorLoss<float> actor_loss(const Network<float>&, const Network<float>&, const Network<float>&,
                                     const Matrix<float>&, const Matrix<float>&, double, std::span<float>);
template ActorLoss<double> actor_loss(const Network<double>&, const Network<double>&, const Network<double>&,
                                      const Matrix<double>&, const Matrix<double>&, double, std::span<double>);

double temperature_loss(double log_alpha, std::span<const double> log_probs, double target_entropy, double* grad) {
  require(!log_probs.empty(), ErrorCode::invalid_argument, "temperature_loss: empty batch");
  double mean = 0.0;
  for (double lp : log_probs) mean += lp + target_entropy;
  mean /= static_cast<double>(log_probs.size());
  if (grad) *grad = -mean;
  return -log_alpha * mean;
}

SACTrainer::SACTrainer(SACAgent& agent, const PolicyTrainConfig& cfg)
    : agent_(agent),
      cfg_(cfg),
      opt_policy_(nn::AdamState<float>::make(agent.policy.param_count(), cfg.lr_actor)),
      opt_q1_(nn::AdamState<float>::make(agent.q1.param_count(), cfg.lr_critic)),
      opt_q2_(nn::AdamState<float>::make(agent.q2.param_count(), cfg.lr_critic)),
      opt_alpha_(nn::AdamState<double>::make(1, cfg.lr_temperature)) {}

UpdateReport SACTrainer::update(const Batch& batch, Rng& rng) {
  require(batch.size() > 0, ErrorCode::invalid_argument, "sac_update: empty batch");
  const Eigen::Index b = batch.size();
  const int d_a = agent_.d_a();
  const Matrix<float> s = agent_.encode_states(batch.s);
  const Matrix<float> s_next = agent_.encode_states(batch.s_next);
  const double alpha = std::exp(agent_.log_alpha);

  const Matrix<float> eps_next = normals<float>(d_a, b, rng);
  const Matrix<float> y = soft_target<float>(agent_.policy, agent_.q1_target, agent_.q2_target, s_next, eps_next,
                                             batch.r, batch.done, cfg_.gamma, alpha);
  const Matrix<float> sa = stack<float>(s, batch.a);
  UpdateReport rep;
  rep.alpha = alpha;
  std::vector<float> g1(agent_.q1.param_count(), 0.0f), g2(agent_.q2.param_count(), 0.0f);
  rep.critic1 = critic_loss<float>(agent_.q1, sa, y, g1);
  rep.critic2 = critic_loss<float>(agent_.q2, sa, y, g2);

  const Matrix<float> eps = normals<float>(d_a, b, rng);
  std::vector<float> gp(agent_.policy.param_count(), 0.0f);
  const ActorLoss<float> al = actor_loss<float>(agent_.policy, agent_.q1, agent_.q2, s, eps, alpha, gp);
  rep.actor = al.value;
  double g_alpha = 0.0;
  const double mlp = al.mean_log_prob;
  rep.temperature = temperature_loss(agent_.log_alpha, std::span<const double>(&mlp, 1), agent_.target_entropy,
                                     &g_alpha);

  if (!std::isfinite(rep.critic1) || !std::isfinite(rep.critic2) || !std::isfinite(rep.actor) ||
      !std::isfinite(rep.temperature)) {
    std::ostringstream os;
    os << "sac_update " << updates_ << ": non-finite loss (critic1=" << rep.critic1 << ", critic2=" << rep.critic2
       << ", actor=" << rep.actor << ", temperature=" << rep.temperature << ", alpha=" << alpha << ")";
    fail(ErrorCode::non_finite, os.str());
  }
  nn::adam_step<float>(agent_.q1.params(), g1, opt_q1_);
  nn::adam_step<float>(agent_.q2.params(), g2, opt_q2_);
  nn::adam_step<float>(agent_.policy.params(), gp, opt_policy_);
  std::vector<double> la{agent_.log_alpha};
  nn::adam_step<double>(la, std::span<const double>(&g_alpha, 1), opt_alpha_);
  agent_.log_alpha = la[0];
  nn::soft_update<float>(agent_.q1_target.params(), agent_.q1.params(), cfg_.tau);
  nn::soft_update<float>(agent_.q2_target.params(), agent_.q2.params(), cfg_.tau);
  ++updates_;
  return rep;
}

RolloutResult rollout_branch(const SACAgent& agent, const model::DynamicsEnsemble& ensemble,
                             const model::Discriminator& disc, const penalty::PenaltyConfig& penalty_cfg,
                             const env::ContinuousEnv& env, const data::TransitionDataset& dataset, int h,
                             int n_starts, Rng& rng) {
  penalty_cfg.validate();
  require(!dataset.empty(), ErrorCode::invalid_argument, "rollout_branch: empty dataset");
  require(h >= 1 && n_starts >= 1, ErrorCode::invalid_argument, "rollout_branch: need h >= 1 and n_starts >= 1");
  const int d_s = ensemble.d_s(), d_a = ensemble.d_a(), k = d_s + 1, n_members = ensemble.size();
  require(d_s == dataset.d_s() && d_a == dataset.d_a() && d_s == agent.d_s() && d_a == agent.d_a(),
          ErrorCode::dimension_mismatch, "rollout_branch: agent, ensemble and dataset dimensions differ");

  RolloutResult out;
  std::vector<std::vector<double>> state(n_starts);
  for (int i = 0; i < n_starts; ++i) {
    const std::size_t idx = rng.below(dataset.size());
    out.start_indices.push_back(idx);
    auto s = dataset.state(idx);
    state[i].assign(s.begin(), s.end());
  }
  std::vector<int> active(n_starts);
  for (int i = 0; i < n_starts; ++i) active[i] = i;

  for (int t = 0; t < h && !active.empty(); ++t) {
    const auto b = static_cast<Eigen::Index>(active.size());
    Matrix<float> sf(d_s, b);
    Matrix<double> sd(d_s, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      for (int q = 0; q < d_s; ++q) {
        sd(q, j) = state[active[j]][q];
        sf(q, j) = static_cast<float>(sd(q, j));
      }
    }
    const Matrix<float> actions = agent.act(sf, rng, false).action;
    const Matrix<double> ad = actions.cast<double>();
    const Matrix<float> x = ensemble.encode_inputs(sd, ad);
    std::vector<Matrix<float>> heads;
    for (int m = 0; m < n_members; ++m) heads.push_back(ensemble.members[m].forward(x));

    const int n_samples = penalty_cfg.disc_samples;
    Matrix<double> tuples(2 * d_s + d_a + 1, b * n_samples);
    std::vector<double> sigma(b);
    std::vector<int> member(b);
    std::vector<double> norms(n_members);
    for (Eigen::Index j = 0; j < b; ++j) {
      for (int m = 0; m < n_members; ++m) {
        double sum = 0.0;
        for (int q = 0; q < k; ++q) sum += std::exp(static_cast<double>(heads[m](k + q, j)));
        norms[m] = std::sqrt(sum);
      }
      member[j] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_members)));
      sigma[j] = penalty::aggregate_std_norms(norms, member[j], penalty_cfg.sigma_agg);
      const Matrix<float>& hm = heads[member[j]];
      for (int smp = 0; smp < n_samples; ++smp) {
        const Eigen::Index col = smp * b + j;
        for (int q = 0; q < d_s; ++q) tuples(q, col) = sd(q, j);
        for (int q = 0; q < d_a; ++q) tuples(d_s + q, col) = ad(q, j);
        for (int q = 0; q < k; ++q) {
          const double y = hm(q, j) + std::exp(0.5 * hm(k + q, j)) * rng.normal();
          const double v = ensemble.output_norm.decode(q, y);
          tuples(d_s + d_a + q, col) = q < d_s ? sd(q, j) + v : v;
        }
      }
    }
    const Matrix<float> dprob = disc.net.forward(disc.encode(tuples));

    std::vector<int> still;
    for (Eigen::Index j = 0; j < b; ++j) {
      std::vector<double> s_next(d_s);
      for (int q = 0; q < d_s; ++q) s_next[q] = tuples(d_s + d_a + q, j);
      const double r = tuples(2 * d_s + d_a, j);
      if (!std::isfinite(r) || !env.in_box(s_next, 2.0)) {
        ++out.truncations;
        continue;
      }
      double u = 0.0;
      for (int smp = 0; smp < n_samples; ++smp) {
        u += penalty::discrepancy_from_prob(dprob(0, smp * b + j), penalty_cfg.mode);
      }
      u /= n_samples;
      const penalty::PenaltyBreakdown br = penalty::reshape_reward(r, sigma[j], u, penalty_cfg.eta);
      data::Transition tr;
      for (int q = 0; q < d_s; ++q) {
        tr.s.push_back(static_cast<float>(sd(q, j)));
        tr.s_next.push_back(static_cast<float>(s_next[q]));
      }
      for (int q = 0; q < d_a; ++q) tr.a.push_back(actions(q, j));
      tr.r = static_cast<float>(br.r_shaped);
      tr.done = env::model_terminal(env, r);
      out.transitions.push_back(std::move(tr));
      out.breakdowns.push_back(br);
      if (!out.transitions.back().done) {
        state[active[j]] = s_next;
        still.push_back(active[j]);
      }
    }
    active.swap(still);
  }
  return out;
}

EvalResult evaluate_policy(const env::ContinuousEnv& env,
                           const std::function<std::vector<double>(std::span<const double>, Rng&)>& policy,
                           int episodes, std::uint64_t seed) {
  require(episodes >= 1, ErrorCode::invalid_argument, "evaluate_policy: episodes must be >= 1");
  env::EvaluationScope scope;
  std::vector<double> returns;
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(ep)));
    std::vector<double> s = env::env_reset(env, rng);
    double ret = 0.0;
    for (int t = 0; t < env.horizon; ++t) {
      const std::vector<double> a = policy(s, rng);
      env::StepResult res = env::env_step(env, s, a, rng);
      ret += res.reward;
      if (res.done) break;
      s = std::move(res.next_state);
    }
    returns.push_back(ret);
  }
  EvalResult out;
  for (double r : returns) out.mean += r;
  out.mean /= episodes;
  for (double r : returns) out.std += (r - out.mean) * (r - out.mean);
  out.std = std::sqrt(out.std / episodes);
  return out;
}

EvalResult evaluate_policy(const env::ContinuousEnv& env, const SACAgent& agent, int episodes, std::uint64_t seed) {
  return evaluate_policy(
      env, [&](std::span<const double> s, Rng& rng) { return agent.sample_action(s, rng, true).action; }, episodes,
      seed);
}

double normalized_score(double j, double j_random, double j_expert) {
  require(j_expert != j_random, ErrorCode::invalid_argument,
          "normalized_score: expert and random reference returns coincide");
  return 100.0 * (j - j_random) / (j_expert - j_random);
}

SACAgent make_offline_agent(const data::TransitionDataset& dataset, const PolicyTrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 0xa9e7));
  SACAgent agent(dataset.d_s(), dataset.d_a(), cfg.hidden, cfg.init_temperature, rng);
  agent.state_norm = model::Normalizer{dataset.header.state_mean, dataset.header.state_std};
  return agent;
}

PolicyTrainReport train_policy(SACAgent& agent, const data::TransitionDataset& dataset,
                               const model::DynamicsEnsemble& ensemble, const model::Discriminator& disc,
                               const penalty::PenaltyConfig& penalty_cfg, const env::ContinuousEnv& env,
                               const PolicyTrainConfig& cfg, const PolicyEpochCallback& on_epoch) {
  cfg.validate();
  penalty_cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(derive_seed(cfg.seed, 0x5ac));
  const ReplayBuffer env_buf = ReplayBuffer::from_dataset(dataset, BufferRole::env);
  ReplayBuffer model_buf(dataset.d_s(), dataset.d_a(),
                         static_cast<std::size_t>(cfg.rollout_horizon) * cfg.rollouts_per_epoch *
                             cfg.model_retention_epochs,
                         BufferRole::model);
  SACTrainer trainer(agent, cfg);
  PolicyTrainReport report;
  const std::uint64_t eval_seed = derive_seed(cfg.seed, 0xe7a1);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochMetrics em;
    em.epoch = epoch;
    RolloutResult rr = rollout_branch(agent, ensemble, disc, penalty_cfg, env, dataset, cfg.rollout_horizon,
                                      cfg.rollouts_per_epoch, rng);
    for (const auto& t : rr.transitions) model_buf.add(t);
    em.truncations = rr.truncations;
    for (const auto& br : rr.breakdowns) {
      em.mean_shaped_reward += br.r_shaped;
      em.mean_penalty += br.sigma_term + br.disc_term;
    }
    if (!rr.breakdowns.empty()) {
      em.mean_shaped_reward /= static_cast<double>(rr.breakdowns.size());
      em.mean_penalty /= static_cast<double>(rr.breakdowns.size());
    }
    for (int u = 0; u < cfg.updates_per_epoch; ++u) {
      const Batch batch = mixed_batch(env_buf, model_buf, cfg.batch_size, cfg.real_fraction, rng);
      const UpdateReport rep = trainer.update(batch, rng);
      em.critic1 += rep.critic1;
      em.critic2 += rep.critic2;
      em.actor += rep.actor;
      em.temperature += rep.temperature;
    }
    if (cfg.updates_per_epoch > 0) {
      const double n = cfg.updates_per_epoch;
      em.critic1 /= n;
      em.critic2 /= n;
      em.actor /= n;
      em.temperature /= n;
    }
    em.alpha = std::exp(agent.log_alpha);
    em.env_buffer_size = env_buf.size();
    em.model_buffer_size = model_buf.size();
    const EvalResult ev = evaluate_policy(env, agent, cfg.eval_episodes, eval_seed);
    em.eval_return_mean = ev.mean;
    em.eval_return_std = ev.std;
    report.epochs.push_back(em);
    if (epoch + 1 == cfg.epochs) report.last_breakdowns = std::move(rr.breakdowns);
    if (on_epoch) on_epoch(em);
  }
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

OnlineResult train_online(const env::ContinuousEnv& env, const PolicyTrainConfig& cfg, const OnlineConfig& online) {
  cfg.validate();
  require(online.total_steps >= 1 && online.warmup_steps >= 0 && online.eval_every >= 1 &&
              online.eval_episodes >= 1 && online.updates_per_step >= 0,
          ErrorCode::invalid_argument, "train_online: invalid online schedule");
  Rng rng(derive_seed(cfg.seed, 0x0411));
  OnlineResult out;
  out.agent = SACAgent(env.state_dim, env.action_dim, cfg.hidden, cfg.init_temperature, rng);
  for (int i = 0; i < env.state_dim; ++i) {
    out.agent.state_norm.mean[i] = 0.5 * (env.state_low[i] + env.state_high[i]);
    out.agent.state_norm.stdev[i] = 0.5 * (env.state_high[i] - env.state_low[i]);
  }
  out.replay = ReplayBuffer(env.state_dim, env.action_dim, static_cast<std::size_t>(online.total_steps),
                            BufferRole::env);
  SACTrainer trainer(out.agent, cfg);
  const ReplayBuffer empty_model(env.state_dim, env.action_dim, 1, BufferRole::model);
  const std::uint64_t eval_seed = derive_seed(cfg.seed, 0xe7a1);

  std::vector<double> s = env::env_reset(env, rng);
  int t_ep = 0;
  for (int step = 0; step < online.total_steps; ++step) {
    std::vector<double> a(env.action_dim);
    if (step < online.warmup_steps) {
      for (double& v : a) v = rng.uniform(-1.0, 1.0);
    } else {
      a = out.agent.sample_action(s, rng, false).action;
    }
    env::StepResult res = env::env_step(env, s, a, rng);
    out.replay.add(s, a, res.next_state, res.reward, res.done);
    ++t_ep;
    if (res.done || t_ep >= env.horizon) {
      s = env::env_reset(env, rng);
      t_ep = 0;
    } else {
      s = std::move(res.next_state);
    }
    if (step + 1 >= online.warmup_steps) {
      for (int u = 0; u < online.updates_per_step; ++u) {
        trainer.update(mixed_batch(out.replay, empty_model, cfg.batch_size, 1.0, rng), rng);
      }
    }
    if ((step + 1) % online.eval_every == 0) {
      const EvalResult ev = evaluate_policy(env, out.agent, online.eval_episodes, eval_seed);
      out.snapshots.push_back({step + 1, ev.mean, out.agent.policy.params(), out.replay.size()});
    }
  }
  return out;
}

}  // namespace moan::sac
