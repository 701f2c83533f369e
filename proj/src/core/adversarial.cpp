#include "adversarial.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "error.hpp"

namespace moan::model {

namespace {

nn::NetSpec ensemble_spec(int d_s, int d_a, const std::vector<int>& hidden) {
  return nn::NetSpec::mlp(d_s + d_a, hidden, 2 * (d_s + 1), nn::OutputHead::gaussian_diag,
                          nn::Activation::relu);
}

nn::NetSpec disc_spec(int d_s, int d_a, const std::vector<int>& hidden) {
  return nn::NetSpec::mlp(2 * d_s + d_a + 1, hidden, 1, nn::OutputHead::sigmoid_scalar,
                          nn::Activation::relu);
}

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

DynamicsEnsemble::DynamicsEnsemble(int d_s, int d_a, int n, const std::vector<int>& hidden)
    : d_s_(d_s), d_a_(d_a) {
  require(n >= 1, ErrorCode::invalid_argument, "ensemble needs at least one member");
  const nn::NetSpec spec = ensemble_spec(d_s, d_a, hidden);
  members.assign(n, Network<float>(spec));
  input_norm.mean.assign(d_s + d_a, 0.0);
  input_norm.stdev.assign(d_s + d_a, 1.0);
  output_norm.mean.assign(d_s + 1, 0.0);
  output_norm.stdev.assign(d_s + 1, 1.0);
}

Matrix<float> DynamicsEnsemble::encode_inputs(const Matrix<double>& states, const Matrix<double>& actions) const {
  require(states.rows() == d_s_ && actions.rows() == d_a_ && states.cols() == actions.cols(),
          ErrorCode::dimension_mismatch, "ensemble input: dimension mismatch");
  Matrix<float> x(d_s_ + d_a_, states.cols());
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    for (int i = 0; i < d_s_; ++i) x(i, j) = static_cast<float>(input_norm.encode(i, states(i, j)));
    for (int i = 0; i < d_a_; ++i) x(d_s_ + i, j) = static_cast<float>(input_norm.encode(d_s_ + i, actions(i, j)));
  }
  return x;
}

Matrix<float> predict_normalized(const DynamicsEnsemble& ensemble, int member, const Matrix<float>& inputs) {
  require(member >= 0 && member < ensemble.size(), ErrorCode::invalid_argument,
          "member index " + std::to_string(member) + " out of range");
  return ensemble.members[member].forward(inputs);
}

GaussianPrediction DynamicsEnsemble::predict(int member, std::span<const double> s,
                                             std::span<const double> a) const {
  require(static_cast<int>(s.size()) == d_s_ && static_cast<int>(a.size()) == d_a_,
          ErrorCode::dimension_mismatch, "predict: state/action dimension mismatch");
  Matrix<double> sm(d_s_, 1), am(d_a_, 1);
  for (int i = 0; i < d_s_; ++i) sm(i, 0) = s[i];
  for (int i = 0; i < d_a_; ++i) am(i, 0) = a[i];
  const Matrix<float> out = predict_normalized(*this, member, encode_inputs(sm, am));
  const int k = output_dim();
  GaussianPrediction p;
  for (int i = 0; i < k; ++i) {
    const double lv = out(k + i, 0);
    const double sd = output_norm.stdev[i];
    p.mean.push_back(output_norm.decode(i, out(i, 0)));
    p.variance.push_back(std::exp(lv) * sd * sd);
    p.normalized_log_variance.push_back(lv);
  }
  return p;
}

Discriminator::Discriminator(int d_s, int d_a, const std::vector<int>& hidden)
    : net(disc_spec(d_s, d_a, hidden)), d_s_(d_s), d_a_(d_a) {
  state_norm.mean.assign(d_s, 0.0);
  state_norm.stdev.assign(d_s, 1.0);
  action_norm.mean.assign(d_a, 0.0);
  action_norm.stdev.assign(d_a, 1.0);
}

Matrix<float> Discriminator::encode(const Matrix<double>& tuples) const {
  require(tuples.rows() == 2 * d_s_ + d_a_ + 1, ErrorCode::dimension_mismatch,
          "discriminator input: expected (s, a, s', r) rows");
  Matrix<float> x(tuples.rows(), tuples.cols());
  for (Eigen::Index j = 0; j < tuples.cols(); ++j) {
    int row = 0;
    for (int i = 0; i < d_s_; ++i, ++row) x(row, j) = static_cast<float>(state_norm.encode(i, tuples(row, j)));
    for (int i = 0; i < d_a_; ++i, ++row) x(row, j) = static_cast<float>(action_norm.encode(i, tuples(row, j)));
    for (int i = 0; i < d_s_; ++i, ++row) x(row, j) = static_cast<float>(state_norm.encode(i, tuples(row, j)));
    x(row, j) = static_cast<float>((tuples(row, j) - reward_mean) / reward_std);
  }
  return x;
}

double Discriminator::prob(std::span<const double> s, std::span<const double> a,
                           std::span<const double> s_next, double r) const {
  require(static_cast<int>(s.size()) == d_s_ && static_cast<int>(a.size()) == d_a_ &&
              static_cast<int>(s_next.size()) == d_s_,
          ErrorCode::dimension_mismatch, "discriminator: tuple dimension mismatch");
  Matrix<double> t(2 * d_s_ + d_a_ + 1, 1);
  int row = 0;
  for (double v : s) t(row++, 0) = v;
  for (double v : a) t(row++, 0) = v;
  for (double v : s_next) t(row++, 0) = v;
  t(row, 0) = r;
  return net.forward(encode(t))(0, 0);
}

SampledTransition sample_next(const DynamicsEnsemble& ensemble, std::span<const double> s,
                              std::span<const double> a, Rng& rng) {
  SampledTransition out;
  out.member = static_cast<int>(rng.below(static_cast<std::uint64_t>(ensemble.size())));
  const GaussianPrediction p = ensemble.predict(out.member, s, a);
  out.s_next.resize(ensemble.d_s());
  for (int i = 0; i < ensemble.d_s(); ++i) {
    out.s_next[i] = s[i] + p.mean[i] + std::sqrt(p.variance[i]) * rng.normal();
  }
  const int k = ensemble.d_s();
  out.r = p.mean[k] + std::sqrt(p.variance[k]) * rng.normal();
  return out;
}

template <typename T>
DiscObjective<T> disc_objective(const Network<T>& disc, const Matrix<T>& real, const Matrix<T>& fake,
                                bool want_grad) {
  require(real.cols() > 0 && fake.cols() > 0, ErrorCode::invalid_argument,
          "disc_objective: both batches must be non-empty");
  DiscObjective<T> out;
  nn::Tape<T> tape_real, tape_fake;
  const Matrix<T> d_real = disc.forward(real, tape_real);
  const Matrix<T> d_fake = disc.forward(fake, tape_fake);
  const double nr = static_cast<double>(real.cols());
  const double nf = static_cast<double>(fake.cols());
  double sum_real = 0.0, sum_fake = 0.0;
  int correct = 0;
  Matrix<T> g_real(1, real.cols()), g_fake(1, fake.cols());
  for (Eigen::Index j = 0; j < real.cols(); ++j) {
    const double d = d_real(0, j);
    sum_real += std::log(d);
    correct += d > 0.5 ? 1 : 0;
    g_real(0, j) = static_cast<T>(1.0 / (d * nr));
  }
  for (Eigen::Index j = 0; j < fake.cols(); ++j) {
    const double d = d_fake(0, j);
    sum_fake += std::log1p(-d);
    correct += d < 0.5 ? 1 : 0;
    g_fake(0, j) = static_cast<T>(-1.0 / ((1.0 - d) * nf));
  }
  out.value = sum_real / nr + sum_fake / nf;
  out.accuracy = static_cast<double>(correct) / (nr + nf);
  if (!std::isfinite(out.value)) fail(ErrorCode::non_finite, "disc_objective: non-finite value");
  if (want_grad) {
    out.grad.assign(disc.param_count(), T(0));
    disc.backward(tape_real, g_real, out.grad);
    disc.backward(tape_fake, g_fake, out.grad);
  }
  return out;
}

template <typename T>
GenObjective<T> gen_objective(const Network<T>& member, const Network<T>& disc, const GenBatch<T>& batch,
                              double alpha, bool non_saturating) {
  require(alpha >= 0.0, ErrorCode::invalid_argument, "gen_objective: alpha must be non-negative");
  const Eigen::Index b = batch.inputs.cols();
  const Eigen::Index k = batch.targets.rows();
  GenObjective<T> out;
  nn::Tape<T> tape;
  const Matrix<T> head = member.forward(batch.inputs, tape);
  const Matrix<T> mean = head.topRows(k);
  const Matrix<T> log_var = head.bottomRows(k);
  auto nll = nn::gaussian_nll_batch<T>(mean, log_var, batch.targets);
  out.nll = nll.loss;
  Matrix<T> grad_head(2 * k, b);
  grad_head.topRows(k) = nll.grad_mean;
  grad_head.bottomRows(k) = nll.grad_log_variance;

  // Reparameterized sample and the generated discriminator input.
  const Matrix<T> stdev = (T(0.5) * log_var.array()).exp().matrix();
  const Matrix<T> y = mean + stdev.cwiseProduct(batch.noise);
  out.fake.resize(batch.disc_head.rows() + k, b);
  out.fake.topRows(batch.disc_head.rows()) = batch.disc_head;
  out.fake.bottomRows(k) = batch.disc_offset + batch.disc_scale.asDiagonal() * y;

  if (alpha > 0.0) {
    nn::Tape<T> disc_tape;
    const Matrix<T> d = disc.forward(out.fake, disc_tape);
    Matrix<T> g_d(1, b);
    double adv = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      const double dj = d(0, j);
      if (non_saturating) {
        adv += -std::log(dj);
        g_d(0, j) = static_cast<T>(-alpha / (dj * b));
      } else {
        adv += std::log1p(-dj);
        g_d(0, j) = static_cast<T>(-alpha / ((1.0 - dj) * b));
      }
    }
    out.adversarial = adv / static_cast<double>(b);
    // Discriminator parameters are constants here: no parameter gradient buffer.
    const Matrix<T> g_x = disc.backward(disc_tape, g_d, std::span<T>{});
    const Matrix<T> g_y = batch.disc_scale.asDiagonal() * g_x.bottomRows(k);
    grad_head.topRows(k) += g_y;
    grad_head.bottomRows(k) += (g_y.cwiseProduct(stdev).cwiseProduct(batch.noise)) * T(0.5);
  }
  out.value = out.nll + alpha * out.adversarial;
  if (!std::isfinite(out.value)) fail(ErrorCode::non_finite, "gen_objective: non-finite value");
  out.grad.assign(member.param_count(), T(0));
  member.backward(tape, grad_head, out.grad);
  return out;
}

template DiscObjective<float> disc_objective(const Network<float>&, const Matrix<float>&, const Matrix<float>&, bool);
template DiscObjective<double> disc_objective(const Network<double>&, const Matrix<double>&, const Matrix<double>&, bool);
template GenObjective<float> gen_objective(const Network<float>&, const Network<float>&, const GenBatch<float>&, double, bool);
template GenObjective<double> gen_objective(const Network<double>&, const Network<double>&, const GenBatch<double>&, double, bool);

void ModelTrainConfig::validate() const {
  require(ensemble_size >= 1, ErrorCode::invalid_argument, "model.ensemble_size must be >= 1");
  require(!hidden.empty() && !disc_hidden.empty(), ErrorCode::invalid_argument,
          "model.hidden and model.disc_hidden need at least one layer");
  require(alpha >= 0.0, ErrorCode::invalid_argument, "model.alpha must be non-negative");
  require(lr_gen > 0.0 && lr_disc > 0.0, ErrorCode::invalid_argument, "model learning rates must be positive");
  require(batch_size >= 1, ErrorCode::invalid_argument, "model.batch_size must be >= 1");
  require(max_epochs >= 1, ErrorCode::invalid_argument, "model.max_epochs must be >= 1");
  require(holdout_fraction > 0.0 && holdout_fraction <= 0.5, ErrorCode::invalid_argument,
          "model.holdout_fraction must lie in (0, 0.5]");
  require(patience >= 1, ErrorCode::invalid_argument, "model.patience must be >= 1");
  require(disc_steps_per_gen_step >= 1, ErrorCode::invalid_argument,
          "model.disc_steps_per_gen_step must be >= 1");
}

HoldoutSplit split_holdout(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x401d));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(fraction * n)));
  HoldoutSplit split;
  split.holdout.assign(order.begin(), order.begin() + std::min(n_hold, n));
  split.train.assign(order.begin() + std::min(n_hold, n), order.end());
  std::sort(split.holdout.begin(), split.holdout.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

Normalizer output_normalizer(const data::TransitionDataset& ds, std::span<const std::size_t> indices) {
  const int k = ds.d_s() + 1;
  Normalizer norm;
  norm.mean.assign(k, 0.0);
  norm.stdev.assign(k, 0.0);
  const double n = static_cast<double>(indices.size());
  auto value = [&](std::size_t i, int j) {
    return j < ds.d_s() ? static_cast<double>(ds.next_state(i)[j]) - ds.state(i)[j]
                        : static_cast<double>(ds.reward(i));
  };
  for (std::size_t i : indices) {
    for (int j = 0; j < k; ++j) norm.mean[j] += value(i, j);
  }
  for (double& m : norm.mean) m /= n;
  for (std::size_t i : indices) {
    for (int j = 0; j < k; ++j) {
      const double d = value(i, j) - norm.mean[j];
      norm.stdev[j] += d * d;
    }
  }
  for (double& s : norm.stdev) s = std::max(std::sqrt(s / n), data::kStdFloor);
  return norm;
}

namespace {

// Column-gathered matrices for a set of records.
struct Encoded {
  Matrix<float> inputs;       // ensemble-normalized (s, a)
  Matrix<float> targets;      // normalized (delta s, r)
  Matrix<float> disc_real;    // discriminator-normalized (s, a, s', r)
  Matrix<float> disc_offset;  // constant part of the generated (s', r) rows
};

Encoded encode_records(const data::TransitionDataset& ds, std::span<const std::size_t> idx,
                       const DynamicsEnsemble& ens, const Discriminator& disc) {
  const int d_s = ds.d_s(), d_a = ds.d_a(), k = d_s + 1;
  const auto n = static_cast<Eigen::Index>(idx.size());
  Encoded e;
  e.inputs.resize(d_s + d_a, n);
  e.targets.resize(k, n);
  e.disc_real.resize(2 * d_s + d_a + 1, n);
  e.disc_offset.resize(k, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t i = idx[j];
    auto s = ds.state(i), a = ds.action(i), sn = ds.next_state(i);
    const double r = ds.reward(i);
    for (int q = 0; q < d_s; ++q) {
      e.inputs(q, j) = static_cast<float>(ens.input_norm.encode(q, s[q]));
      e.targets(q, j) = static_cast<float>(ens.output_norm.encode(q, static_cast<double>(sn[q]) - s[q]));
      e.disc_real(q, j) = static_cast<float>(disc.state_norm.encode(q, s[q]));
      e.disc_real(d_s + d_a + q, j) = static_cast<float>(disc.state_norm.encode(q, sn[q]));
      e.disc_offset(q, j) = static_cast<float>(
          (s[q] + ens.output_norm.mean[q] - disc.state_norm.mean[q]) / disc.state_norm.stdev[q]);
    }
    for (int q = 0; q < d_a; ++q) {
      e.inputs(d_s + q, j) = static_cast<float>(ens.input_norm.encode(d_s + q, a[q]));
      e.disc_real(d_s + q, j) = static_cast<float>(disc.action_norm.encode(q, a[q]));
    }
    e.targets(d_s, j) = static_cast<float>(ens.output_norm.encode(d_s, r));
    e.disc_real(2 * d_s + d_a, j) = static_cast<float>((r - disc.reward_mean) / disc.reward_std);
    e.disc_offset(d_s, j) = static_cast<float>((ens.output_norm.mean[d_s] - disc.reward_mean) / disc.reward_std);
  }
  return e;
}

nn::Vector<float> disc_scale(const DynamicsEnsemble& ens, const Discriminator& disc) {
  const int d_s = ens.d_s();
  nn::Vector<float> scale(d_s + 1);
  for (int q = 0; q < d_s; ++q) scale(q) = static_cast<float>(ens.output_norm.stdev[q] / disc.state_norm.stdev[q]);
  scale(d_s) = static_cast<float>(ens.output_norm.stdev[d_s] / disc.reward_std);
  return scale;
}

Matrix<float> gather(const Matrix<float>& m, std::span<const std::size_t> cols) {
  Matrix<float> out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(cols[j]));
  return out;
}

Matrix<float> gaussian_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix<float> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<float>(rng.normal());
  }
  return m;
}

// Generated discriminator inputs for the given columns, one uniformly chosen
// member per column.
Matrix<float> generate_fake(const DynamicsEnsemble& ens, const Encoded& enc, const nn::Vector<float>& scale,
                            std::span<const std::size_t> cols, Rng& rng) {
  const int d_s = ens.d_s(), d_a = ens.d_a(), k = d_s + 1;
  const auto b = static_cast<Eigen::Index>(cols.size());
  Matrix<float> fake(2 * d_s + d_a + 1, b);
  std::vector<std::vector<std::size_t>> by_member(ens.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    by_member[rng.below(static_cast<std::uint64_t>(ens.size()))].push_back(j);
  }
  for (int m = 0; m < ens.size(); ++m) {
    if (by_member[m].empty()) continue;
    std::vector<std::size_t> src;
    for (std::size_t j : by_member[m]) src.push_back(cols[j]);
    const Matrix<float> out = ens.members[m].forward(gather(enc.inputs, src));
    const Matrix<float> noise = gaussian_noise(k, out.cols(), rng);
    for (std::size_t c = 0; c < by_member[m].size(); ++c) {
      const auto jc = static_cast<Eigen::Index>(by_member[m][c]);
      const auto sc = static_cast<Eigen::Index>(src[c]);
      fake.col(jc).head(d_s + d_a) = enc.disc_real.col(sc).head(d_s + d_a);
      for (int q = 0; q < k; ++q) {
        const float y = out(q, c) + std::exp(0.5f * out(k + q, c)) * noise(q, c);
        fake(d_s + d_a + q, jc) = enc.disc_offset(q, sc) + scale(q) * y;
      }
    }
  }
  return fake;
}

std::vector<double> member_mse(const DynamicsEnsemble& ens, const Encoded& enc) {
  const int k = ens.output_dim();
  std::vector<double> out;
  for (int m = 0; m < ens.size(); ++m) {
    const Matrix<float> pred = ens.members[m].forward(enc.inputs);
    const double sse = (pred.topRows(k) - enc.targets).template cast<double>().squaredNorm();
    out.push_back(sse / static_cast<double>(enc.targets.size()));
  }
  return out;
}

}  // namespace

TrainedModel train_adversarial(const data::TransitionDataset& dataset, const ModelTrainConfig& config,
                               const EpochCallback& on_epoch) {
  config.validate();
  require(dataset.size() >= static_cast<std::size_t>(10 * config.batch_size), ErrorCode::invalid_argument,
          "train_adversarial: dataset has " + std::to_string(dataset.size()) +
              " records, needs at least 10 x batch_size = " + std::to_string(10 * config.batch_size));
  const auto t0 = std::chrono::steady_clock::now();
  const int d_s = dataset.d_s(), d_a = dataset.d_a();
  const auto& h = dataset.header;

  TrainedModel tm;
  DynamicsEnsemble& ens = tm.ensemble;
  ens = DynamicsEnsemble(d_s, d_a, config.ensemble_size, config.hidden);
  Discriminator& disc = tm.disc;
  disc = Discriminator(d_s, d_a, config.disc_hidden);

  const HoldoutSplit split = split_holdout(dataset.size(), config.holdout_fraction, config.seed);
  for (int i = 0; i < d_s; ++i) {
    ens.input_norm.mean[i] = h.state_mean[i];
    ens.input_norm.stdev[i] = h.state_std[i];
  }
  for (int i = 0; i < d_a; ++i) {
    ens.input_norm.mean[d_s + i] = h.action_mean[i];
    ens.input_norm.stdev[d_s + i] = h.action_std[i];
  }
  ens.output_norm = output_normalizer(dataset, split.train);
  disc.state_norm = Normalizer{h.state_mean, h.state_std};
  disc.action_norm = Normalizer{h.action_mean, h.action_std};
  disc.reward_mean = h.reward_mean;
  disc.reward_std = h.reward_std;

  Rng root(derive_seed(config.seed, 0xad5));
  std::vector<Rng> member_rng;
  for (int m = 0; m < ens.size(); ++m) {
    member_rng.push_back(root.split(static_cast<std::uint64_t>(m) + 1));
    ens.members[m].init_uniform(member_rng.back());
  }
  Rng disc_rng = root.split(0xd15c);
  disc.net.init_uniform(disc_rng);

  const Encoded train = encode_records(dataset, split.train, ens, disc);
  const Encoded hold = encode_records(dataset, split.holdout, ens, disc);
  const nn::Vector<float> scale = disc_scale(ens, disc);

  std::vector<nn::AdamState<float>> gen_opt;
  for (const auto& m : ens.members) gen_opt.push_back(nn::AdamState<float>::make(m.param_count(), config.lr_gen));
  auto disc_opt = nn::AdamState<float>::make(disc.net.param_count(), config.lr_disc);

  const auto n_train = static_cast<std::size_t>(train.inputs.cols());
  const std::size_t batch = std::min<std::size_t>(config.batch_size, n_train);
  const std::size_t n_batches = std::max<std::size_t>(1, n_train / batch);
  const float gen_sign = config.literal_signs ? -1.0f : 1.0f;

  std::vector<Network<float>> best_members = ens.members;
  Network<float> best_disc = disc.net;
  double best_score = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<std::vector<std::size_t>> order(ens.size(), std::vector<std::size_t>(n_train));
  std::vector<std::size_t> disc_order(n_train);

  ModelTrainReport& report = tm.report;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    for (int m = 0; m < ens.size(); ++m) {
      std::iota(order[m].begin(), order[m].end(), 0);
      for (std::size_t i = n_train; i > 1; --i) std::swap(order[m][i - 1], order[m][member_rng[m].below(i)]);
    }
    std::iota(disc_order.begin(), disc_order.end(), 0);
    for (std::size_t i = n_train; i > 1; --i) std::swap(disc_order[i - 1], disc_order[disc_rng.below(i)]);

    double nll_sum = 0.0, adv_sum = 0.0, disc_sum = 0.0;
    std::size_t gen_count = 0, disc_count = 0;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      for (int m = 0; m < ens.size(); ++m) {
        const std::span<const std::size_t> cols(order[m].data() + bi * batch, batch);
        GenBatch<float> gb;
        gb.inputs = gather(train.inputs, cols);
        gb.targets = gather(train.targets, cols);
        gb.disc_head = gather(train.disc_real, cols).topRows(d_s + d_a);
        gb.disc_offset = gather(train.disc_offset, cols);
        gb.disc_scale = scale;
        gb.noise = gaussian_noise(d_s + 1, static_cast<Eigen::Index>(batch), member_rng[m]);
        GenObjective<float> g;
        try {
          g = gen_objective<float>(ens.members[m], disc.net, gb, config.alpha, config.non_saturating);
        } catch (const Error& e) {
          fail(ErrorCode::non_finite, "train_adversarial diverged at epoch " + std::to_string(epoch) +
                                          ", batch " + std::to_string(bi) + ", member " + std::to_string(m) +
                                          ": " + e.what());
        }
        for (float& v : g.grad) v *= gen_sign;
        nn::adam_step<float>(ens.members[m].params(), g.grad, gen_opt[m]);
        nll_sum += g.nll;
        adv_sum += g.adversarial;
        ++gen_count;
      }
      for (int step = 0; step < config.disc_steps_per_gen_step; ++step) {
        const std::size_t off = ((bi * config.disc_steps_per_gen_step + step) * batch) % (n_train - batch + 1);
        const std::span<const std::size_t> cols(disc_order.data() + off, batch);
        const Matrix<float> real = gather(train.disc_real, cols);
        const Matrix<float> fake = generate_fake(ens, train, scale, cols, disc_rng);
        DiscObjective<float> d = disc_objective<float>(disc.net, real, fake);
        for (float& v : d.grad) v = -v;  // ascend L_D
        try {
          nn::adam_step<float>(disc.net.params(), d.grad, disc_opt);
        } catch (const Error& e) {
          fail(ErrorCode::non_finite, "train_adversarial diverged in the discriminator step at epoch " +
                                          std::to_string(epoch) + ", batch " + std::to_string(bi) + ": " + e.what());
        }
        disc_sum += d.value;
        ++disc_count;
      }
    }

    const std::vector<double> mse = member_mse(ens, hold);
    std::vector<std::size_t> hold_cols(static_cast<std::size_t>(hold.inputs.cols()));
    std::iota(hold_cols.begin(), hold_cols.end(), 0);
    Rng eval_rng(derive_seed(config.seed, 0xe7a1 + static_cast<std::uint64_t>(epoch)));
    const Matrix<float> hold_fake = generate_fake(ens, hold, scale, hold_cols, eval_rng);
    const DiscObjective<float> hold_disc = disc_objective<float>(disc.net, hold.disc_real, hold_fake, false);

    report.gen_nll.push_back(nll_sum / static_cast<double>(gen_count));
    report.gen_adv_loss.push_back(adv_sum / static_cast<double>(gen_count));
    report.disc_loss.push_back(disc_sum / static_cast<double>(disc_count));
    report.holdout_mse.push_back(mse);
    report.disc_accuracy.push_back(hold_disc.accuracy);
    report.stop_epoch = epoch + 1;

    const double score = std::accumulate(mse.begin(), mse.end(), 0.0) / static_cast<double>(mse.size());
    if (!std::isfinite(score)) {
      fail(ErrorCode::non_finite, "train_adversarial: non-finite holdout error at epoch " + std::to_string(epoch));
    }
    if (score < best_score) {
      best_score = score;
      best_members = ens.members;
      best_disc = disc.net;
      report.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch) on_epoch(epoch, report);
    if (since_best >= config.patience) break;
  }
  ens.members = std::move(best_members);
  disc.net = std::move(best_disc);
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return tm;
}

std::vector<double> validation_mse(const DynamicsEnsemble& ensemble, const data::TransitionDataset& holdout,
                                   MseUnits units) {
  require(!holdout.empty(), ErrorCode::invalid_argument, "validation_mse: empty holdout");
  const int d_s = ensemble.d_s(), d_a = ensemble.d_a(), k = d_s + 1;
  const auto n = static_cast<Eigen::Index>(holdout.size());
  Matrix<double> states(d_s, n), actions(d_a, n), truth(k, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    auto s = holdout.state(j), a = holdout.action(j), sn = holdout.next_state(j);
    for (int q = 0; q < d_s; ++q) {
      states(q, j) = s[q];
      truth(q, j) = static_cast<double>(sn[q]) - s[q];
    }
    for (int q = 0; q < d_a; ++q) actions(q, j) = a[q];
    truth(d_s, j) = holdout.reward(j);
  }
  const Matrix<float> x = ensemble.encode_inputs(states, actions);
  std::vector<double> out;
  for (int m = 0; m < ensemble.size(); ++m) {
    const Matrix<float> pred = ensemble.members[m].forward(x);
    double sse = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (int q = 0; q < k; ++q) {
        double err = ensemble.output_norm.decode(q, pred(q, j)) - truth(q, j);
        if (units == MseUnits::normalized) err /= ensemble.output_norm.stdev[q];
        sse += err * err;
      }
    }
    out.push_back(sse / static_cast<double>(n * k));
  }
  return out;
}

}  // namespace moan::model
