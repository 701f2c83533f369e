// Acceptance suite: one PASS/FAIL line per criterion.
//
//   moan_acceptance [criterion ...]      (default: all of 1..11)
//
// Work files go to $MOAN_ACCEPTANCE_DIR (default ./acceptance_work), which is
// wiped at start so every run trains from scratch.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "adversarial.hpp"
#include "behavior.hpp"
#include "bound_lab.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "env.hpp"
#include "harness.hpp"
#include "io.hpp"
#include "nn.hpp"
#include "penalty.hpp"
#include "rng.hpp"

namespace fs = std::filesystem;
using namespace moan;

namespace {

fs::path work_root;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void progress(const std::string& line) { std::fprintf(stderr, "    %s\n", line.c_str()); }

// Average ranks (ties share their mean rank).
std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = mean_rank;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) { return pearson(ranks(a), ranks(b)); }

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// Desk-scale experiment config rooted in the acceptance work directory.
harness::ExperimentConfig base_config() {
  harness::ExperimentConfig cfg;
  cfg.run.out_dir = (work_root / "runs").string();
  cfg.run.cache_dir = (work_root / "cache").string();
  return cfg;
}

// ---- 1 -----------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const harness::GradCheckSummary s = harness::gradcheck(2024, 20);
  const double t = seconds_since(t0);
  Outcome o;
  o.pass = s.max() <= 1e-4 && t < 120.0;
  o.detail = "max rel err disc " + fmt("%.2g", s.disc) + ", gen(a=0) " + fmt("%.2g", s.gen_alpha0) + ", gen(a=1) " +
             fmt("%.2g", s.gen_alpha1) + ", critic " + fmt("%.2g", s.critic) + ", actor " + fmt("%.2g", s.actor) +
             ", temperature " + fmt("%.2g", s.temperature) + "; 20 nets each; " + fmt("%.1f s", t);
  return o;
}

// ---- 2 -----------------------------------------------------------------------

Outcome value_gap_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(7);
  int failures = 0;
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const bound::TabularMDP real = bound::random_mdp(5, 3, 0.9, rng);
    const bound::TabularMDP model = bound::perturbed_model(real, rng.uniform(), rng);
    const bound::TabularPolicy pi = bound::random_policy(5, 3, rng);
    const bound::ValueGap g = bound::value_gap_identity(real, model, pi);
    const double err = std::abs(g.lhs - g.rhs);
    worst = std::max(worst, err);
    failures += err > 1e-8 ? 1 : 0;
  }
  const double t = seconds_since(t0);
  return {failures == 0 && t < 30.0,
          "200 tuples, max |lhs - rhs| " + fmt("%.2g", worst) + ", failures " + std::to_string(failures) + "; " +
              fmt("%.2f s", t)};
}

// ---- 3 -----------------------------------------------------------------------

Outcome pinsker_chain() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(11);
  int violations = 0, js_over = 0;
  double min_gap = 1e9;
  for (int t = 0; t < 10000; ++t) {
    const int n = 2 + static_cast<int>(rng.below(11));
    const Eigen::VectorXd p = bound::random_simplex(n, rng);
    const Eigen::VectorXd q = bound::random_simplex(n, rng);
    const double tv = bound::tv_distance(p, q);
    const double js = bound::js_divergence(p, q);
    const double gap = std::sqrt(2.0 * js) - tv;
    min_gap = std::min(min_gap, gap);
    violations += gap < 0.0 ? 1 : 0;
    js_over += js > std::log(2.0) ? 1 : 0;
  }
  const double t = seconds_since(t0);
  return {violations == 0 && js_over == 0 && t < 10.0,
          "1e4 pairs, TV violations " + std::to_string(violations) + ", JS > log 2: " + std::to_string(js_over) +
              ", min sqrt(2 JS) - TV " + fmt("%.3g", min_gap) + "; " + fmt("%.2f s", t)};
}

// ---- 4 -----------------------------------------------------------------------

Outcome ipm_specialization() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(13);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 1 + static_cast<int>(rng.below(12));
    const double delta = rng.uniform(0.1, 3.0);
    const Eigen::VectorXd p = bound::random_simplex(n, rng);
    Eigen::VectorXd q = bound::random_simplex(n, rng);
    if (t % 10 == 0) q = p;
    double sup = 0.0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      double diff = 0.0;
      for (int i = 0; i < n; ++i) diff += ((mask >> i) & 1u ? delta : -delta) * (p[i] - q[i]);
      sup = std::max(sup, std::abs(diff));
    }
    worst = std::max(worst, std::abs(sup - 2.0 * delta * bound::tv_distance(p, q)));
  }
  return {worst <= 1e-10, "1e3 trials, supports 1..12, max |sup - 2 delta TV| " + fmt("%.2g", worst) + "; " +
                              fmt("%.2f s", seconds_since(t0))};
}

// ---- 5 -----------------------------------------------------------------------

Outcome theorem_report() {
  const auto t0 = std::chrono::steady_clock::now();
  const harness::BoundCheckSummary s = harness::bound_check(5, 500, work_root / "bound_check.csv");

  Rng rng(17);
  double same_slack = 1e9, zero_err_mismatch = 0.0;
  bool zero_err_strict = true;
  for (int t = 0; t < 50; ++t) {
    const bound::TabularMDP real = bound::random_mdp(5, 3, 0.9, rng);
    const bound::TabularPolicy pi = bound::random_policy(5, 3, rng);
    const bound::TabularPolicy pi_d = bound::random_policy(5, 3, rng);
    const bound::Theorem1Report same = bound::theorem1_check(real, real, pi, pi, 1.0);
    same_slack = std::min(same_slack, -std::abs(same.slack));
    const bound::Theorem1Report far = bound::theorem1_check(real, real, pi, pi_d, 1.0);
    // T = T_hat: the slack is exactly the scaled discrepancy penalty.
    const double predicted = real.gamma * far.discrepancy_term;
    zero_err_mismatch = std::max(zero_err_mismatch, std::abs(far.slack - predicted));
    zero_err_strict = zero_err_strict && far.holds_literal && far.slack > 0.0 && far.model_error_term == 0.0;
  }
  const double t = seconds_since(t0);
  const bool trivial_ok = std::abs(same_slack) <= 1e-12 && zero_err_mismatch <= 1e-12 && zero_err_strict;
  return {s.trials == 500 && s.all_c_star_finite && trivial_ok && t < 120.0,
          "500 tuples, literal hold rate " + fmt("%.3f", s.literal_hold_rate) + ", c* median " +
              fmt("%.3g", s.c_star_median) + ", c* max " + fmt("%.3g", s.c_star_max) + ", all finite " +
              (s.all_c_star_finite ? "yes" : "no") + "; M = M_hat, pi = pi_D slack " + fmt("%.1g", -same_slack) +
              "; T = T_hat slack - gamma * disc term " + fmt("%.1g", zero_err_mismatch) + "; " + fmt("%.2f s", t)};
}

// ---- 6 -----------------------------------------------------------------------

// Discriminator on one-hot points 0..9 against a frozen generator distribution.
double train_toy_discriminator(const std::vector<double>& p_data, const std::vector<double>& p_gen, std::uint64_t seed) {
  using nn::Matrix;
  const int n = 10, batch = 256;
  nn::Network<float> disc(nn::NetSpec::mlp(n, {32}, 1, nn::OutputHead::sigmoid_scalar, nn::Activation::tanh));
  Rng rng(seed);
  disc.init_uniform(rng);
  auto opt = nn::AdamState<float>::make(disc.param_count(), 3e-3);
  auto draw = [&](const std::vector<double>& p) {
    Matrix<float> x = Matrix<float>::Zero(n, batch);
    for (int b = 0; b < batch; ++b) {
      double u = rng.uniform(), c = 0.0;
      int k = 0;
      for (; k < n - 1; ++k) {
        c += p[k];
        if (u < c) break;
      }
      x(k, b) = 1.0f;
    }
    return x;
  };
  for (int step = 0; step < 4000; ++step) {
    const auto obj = model::disc_objective<float>(disc, draw(p_data), draw(p_gen));
    std::vector<float> descent(obj.grad.size());
    for (std::size_t i = 0; i < descent.size(); ++i) descent[i] = -obj.grad[i];
    nn::adam_step<float>(disc.params(), descent, opt);
  }
  const Matrix<float> eye = Matrix<float>::Identity(n, n);
  const Matrix<float> d = disc.forward(eye);
  double worst = 0.0;
  for (int k = 0; k < n; ++k) {
    const double target = p_data[k] / (p_data[k] + p_gen[k]);
    worst = std::max(worst, std::abs(static_cast<double>(d(0, k)) - target));
  }
  return worst;
}

Outcome bayes_discriminator() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(19);
  std::vector<double> p_data(10), p_gen(10);
  for (int k = 0; k < 10; ++k) {
    p_data[k] = 0.5 + rng.uniform();
    p_gen[k] = 0.5 + rng.uniform();
  }
  const double sd = std::accumulate(p_data.begin(), p_data.end(), 0.0);
  const double sg = std::accumulate(p_gen.begin(), p_gen.end(), 0.0);
  for (int k = 0; k < 10; ++k) {
    p_data[k] /= sd;
    p_gen[k] /= sg;
  }
  const double err_diff = train_toy_discriminator(p_data, p_gen, 1);
  const double err_same = train_toy_discriminator(p_data, p_data, 2);
  const double t = seconds_since(t0);
  return {err_diff <= 0.05 && err_same <= 0.05 && t < 60.0,
          "L_inf to p_data / (p_data + p_gen) " + fmt("%.3f", err_diff) + ", equal-distribution L_inf to 0.5 " +
              fmt("%.3f", err_same) + "; " + fmt("%.1f s", t)};
}

// ---- 7 -----------------------------------------------------------------------

struct MleData {
  nn::Matrix<float> x_train, y_train, x_hold, y_hold;
};

// Encodes (s, a) -> (delta s, r) with the same normalizers the model uses.
MleData encode_for_mle(const data::TransitionDataset& ds, const model::HoldoutSplit& split) {
  const int d_s = ds.d_s(), d_a = ds.d_a();
  const auto& h = ds.header;
  std::vector<double> out_mean(d_s + 1, 0.0), out_std(d_s + 1, 0.0);
  for (std::size_t i : split.train) {
    for (int k = 0; k < d_s; ++k) out_mean[k] += ds.next_state(i)[k] - ds.state(i)[k];
    out_mean[d_s] += ds.reward(i);
  }
  for (double& m : out_mean) m /= static_cast<double>(split.train.size());
  for (std::size_t i : split.train) {
    for (int k = 0; k < d_s; ++k) {
      const double d = ds.next_state(i)[k] - ds.state(i)[k] - out_mean[k];
      out_std[k] += d * d;
    }
    const double d = ds.reward(i) - out_mean[d_s];
    out_std[d_s] += d * d;
  }
  for (double& v : out_std) v = std::max(std::sqrt(v / static_cast<double>(split.train.size())), data::kStdFloor);

  auto fill = [&](const std::vector<std::size_t>& idx, nn::Matrix<float>& x, nn::Matrix<float>& y) {
    x.resize(d_s + d_a, static_cast<Eigen::Index>(idx.size()));
    y.resize(d_s + 1, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) {
      const std::size_t i = idx[c];
      for (int k = 0; k < d_s; ++k) {
        x(k, c) = static_cast<float>((ds.state(i)[k] - h.state_mean[k]) / h.state_std[k]);
        y(k, c) = static_cast<float>((ds.next_state(i)[k] - ds.state(i)[k] - out_mean[k]) / out_std[k]);
      }
      for (int k = 0; k < d_a; ++k) x(d_s + k, c) = static_cast<float>((ds.action(i)[k] - h.action_mean[k]) / h.action_std[k]);
      y(d_s, c) = static_cast<float>((ds.reward(i) - out_mean[d_s]) / out_std[d_s]);
    }
  };
  MleData m;
  fill(split.train, m.x_train, m.y_train);
  fill(split.holdout, m.x_hold, m.y_hold);
  return m;
}

double mean_member_mse(const std::vector<nn::Network<float>>& members, const nn::Matrix<float>& x,
                       const nn::Matrix<float>& y) {
  double total = 0.0;
  for (const auto& net : members) {
    const nn::Matrix<float> out = net.forward(x);
    const nn::Matrix<float> diff = out.topRows(y.rows()) - y;
    total += static_cast<double>(diff.squaredNorm()) / static_cast<double>(diff.size());
  }
  return total / static_cast<double>(members.size());
}

// Plain Gaussian maximum-likelihood ensemble, no discriminator anywhere.
double mle_only_holdout_mse(const MleData& d, const model::ModelTrainConfig& cfg, std::uint64_t seed) {
  const int k = static_cast<int>(d.y_train.rows());
  const int in = static_cast<int>(d.x_train.rows());
  Rng rng(seed);
  std::vector<nn::Network<float>> members;
  std::vector<nn::AdamState<float>> opts;
  for (int m = 0; m < cfg.ensemble_size; ++m) {
    members.emplace_back(nn::NetSpec::mlp(in, cfg.hidden, 2 * k, nn::OutputHead::gaussian_diag, nn::Activation::relu));
    members.back().init_uniform(rng);
    opts.push_back(nn::AdamState<float>::make(members.back().param_count(), cfg.lr_gen));
  }
  const Eigen::Index n = d.x_train.cols();
  const Eigen::Index batch = cfg.batch_size;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (auto& net : members) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      auto& opt = opts[&net - members.data()];
      for (Eigen::Index b = 0; b + batch <= n; b += batch) {
        nn::Matrix<float> x(in, batch), y(k, batch);
        for (Eigen::Index c = 0; c < batch; ++c) {
          x.col(c) = d.x_train.col(order[b + c]);
          y.col(c) = d.y_train.col(order[b + c]);
        }
        nn::Tape<float> tape;
        const nn::Matrix<float> out = net.forward(x, tape);
        // d/d(mu, lv) of 0.5 * ((y - mu)^2 exp(-lv) + lv), averaged over the batch.
        nn::Matrix<float> g(2 * k, batch);
        for (Eigen::Index c = 0; c < batch; ++c) {
          for (int r = 0; r < k; ++r) {
            const double inv_var = std::exp(-static_cast<double>(out(k + r, c)));
            const double e = static_cast<double>(y(r, c)) - out(r, c);
            g(r, c) = static_cast<float>(-e * inv_var / batch);
            g(k + r, c) = static_cast<float>(0.5 * (1.0 - e * e * inv_var) / batch);
          }
        }
        std::vector<float> grad(net.param_count(), 0.0f);
        net.backward(tape, g, grad);
        nn::adam_step<float>(net.params(), grad, opt);
      }
    }
    const double mse = mean_member_mse(members, d.x_hold, d.y_hold);
    if (mse < best) {
      best = mse;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return best;
}

Outcome mle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  const env::ContinuousEnv env = env::ContinuousEnv::make(env::EnvKind::pointmass2d);
  const data::TransitionDataset ds = behavior::generate_dataset(env, data::BehaviorTag::random, 10000, 3);
  std::string detail;
  bool pass = true;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    model::ModelTrainConfig cfg = base_config().model_config();
    cfg.alpha = 0.0;
    cfg.ensemble_size = 3;
    cfg.hidden = {64, 64};
    cfg.max_epochs = 15;
    cfg.seed = seed;
    const model::TrainedModel tm = model::train_adversarial(ds, cfg);
    const model::HoldoutSplit split = model::split_holdout(ds.size(), cfg.holdout_fraction, cfg.seed);
    const MleData md = encode_for_mle(ds, split);
    const double adv = mean_member_mse(tm.ensemble.members, md.x_hold, md.y_hold);
    const double mle = mle_only_holdout_mse(md, cfg, derive_seed(seed, 0x3e1));
    const double rel = std::abs(adv - mle) / mle;
    pass = pass && rel <= 0.10;
    detail += "seed " + std::to_string(seed) + ": alpha=0 " + fmt("%.4f", adv) + " vs MLE " + fmt("%.4f", mle) +
              " (rel " + fmt("%.3f", rel) + "); ";
  }
  const double t = seconds_since(t0);
  return {pass && t < 300.0, detail + fmt("%.1f s", t)};
}

// ---- 8 -----------------------------------------------------------------------

Outcome penalty_error_correlation() {
  const auto t0 = std::chrono::steady_clock::now();
  const env::ContinuousEnv env = env::ContinuousEnv::make(env::EnvKind::pointmass2d);
  std::string detail;
  int wins = 0, above = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    harness::ExperimentConfig cfg = base_config();
    cfg.dataset.tag = data::BehaviorTag::medium_replay;
    cfg.dataset.size = 50000;
    cfg.dataset.seed = seed;
    cfg.run.seed = seed;
    const data::TransitionDataset ds = harness::obtain_dataset(cfg, true, progress);
    const model::TrainedModel tm = harness::obtain_model(cfg, ds, progress);

    Rng rng(derive_seed(seed, 0xf15));
    std::vector<double> penalty, err;
    penalty::PenaltyConfig pc;
    pc.mode = penalty::PenaltyMode::discrepancy;
    while (penalty.size() < 1000) {
      std::vector<double> s(env.state_dim), a(env.action_dim);
      for (int i = 0; i < env.state_dim; ++i) s[i] = rng.uniform(env.state_low[i], env.state_high[i]);
      for (double& v : a) v = rng.uniform(-1.0, 1.0);
      const env::StepResult truth = env::env_step_mean(env, s, a);
      if (truth.done) continue;
      double mse = 0.0;
      for (int m = 0; m < tm.ensemble.size(); ++m) {
        const model::GaussianPrediction p = tm.ensemble.predict(m, s, a);
        for (int i = 0; i < env.state_dim; ++i) {
          const double e = s[i] + p.mean[i] - truth.next_state[i];
          mse += e * e;
        }
      }
      mse /= static_cast<double>(tm.ensemble.size() * env.state_dim);
      const model::SampledTransition st = model::sample_next(tm.ensemble, s, a, rng);
      const double sigma = penalty::sigma_aggregate(tm.ensemble, s, a, st.member, pc);
      const double u = penalty::discrepancy(tm.disc, s, a, st.s_next, st.r, pc.mode);
      const penalty::PenaltyBreakdown b = penalty::reshape_reward(st.r, sigma, u, 1.0);
      penalty.push_back(b.r_raw - b.r_shaped);
      err.push_back(mse);
    }
    const double rho = spearman(penalty, err);
    std::vector<double> shuffled = penalty;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    const double rho_shuffled = spearman(shuffled, err);
    above += rho >= 0.4 ? 1 : 0;
    wins += rho > rho_shuffled ? 1 : 0;
    detail += fmt("%.3f", rho) + " (shuffled " + fmt("%.3f", rho_shuffled) + "), ";
  }
  const double t = seconds_since(t0);
  return {above == 5 && wins == 5 && t < 900.0,
          "Spearman per seed: " + detail + std::to_string(above) + "/5 >= 0.4, " + std::to_string(wins) +
              "/5 above shuffled; " + fmt("%.0f s", t)};
}

// ---- 9 / 10 ------------------------------------------------------------------

harness::ExperimentConfig medium_config() {
  harness::ExperimentConfig cfg = base_config();
  cfg.dataset.tag = data::BehaviorTag::medium;
  return cfg;
}

std::vector<double> returns_for(const harness::SweepResult& r, double value) {
  std::vector<double> out;
  for (const auto& row : r.rows) {
    if (row.value == value) out.push_back(row.final_return);
  }
  return out;
}

const std::vector<std::uint64_t> kSeeds{0, 1, 2, 3, 4};

Outcome offline_improvement() {
  const auto t0 = std::chrono::steady_clock::now();
  const harness::ExperimentConfig cfg = medium_config();
  harness::obtain_dataset(cfg, true, progress);
  const harness::SweepResult r =
      harness::ablation_sweep(cfg, "eta", {cfg.penalty.eta, 0.0}, kSeeds, work_root / "sweep-eta", 1, progress);
  const double behavior = r.rows.front().behavior_return;
  const double with_penalty = mean_of(returns_for(r, cfg.penalty.eta));
  const double without = mean_of(returns_for(r, 0.0));
  const double t = seconds_since(t0);
  return {with_penalty > behavior && with_penalty > without && t < 2700.0,
          "behavior return " + fmt("%.2f", behavior) + ", eta=" + fmt("%g", cfg.penalty.eta) + " mean " +
              fmt("%.2f", with_penalty) + ", eta=0 mean " + fmt("%.2f", without) + " (5 seeds); " + fmt("%.0f s", t)};
}

Outcome alpha_ablation() {
  const auto t0 = std::chrono::steady_clock::now();
  const harness::ExperimentConfig cfg = medium_config();
  harness::obtain_dataset(cfg, true, progress);
  const std::vector<double> values{0.0, 0.1, 1.0};
  const harness::SweepResult r = harness::ablation_sweep(cfg, "alpha", values, kSeeds, work_root / "sweep-alpha", 1, progress);
  std::vector<double> means;
  for (double v : values) means.push_back(mean_of(returns_for(r, v)));
  const bool complete = r.rows.size() == 15 && fs::exists(r.summary_csv);
  const bool not_worst = means[1] > std::min(means[0], means[2]);
  const double t = seconds_since(t0);
  return {complete && not_worst && t < 5400.0,
          "means alpha=0 " + fmt("%.2f", means[0]) + ", alpha=0.1 " + fmt("%.2f", means[1]) + ", alpha=1 " +
              fmt("%.2f", means[2]) + "; rows " + std::to_string(r.rows.size()) + ", summary " +
              r.summary_csv.filename().string() + "; " + fmt("%.0f s", t)};
}

// ---- 11 ----------------------------------------------------------------------

harness::ExperimentConfig smoke_config(const std::string& tag) {
  harness::ExperimentConfig cfg;
  cfg.run.out_dir = (work_root / ("determinism-" + tag)).string();
  cfg.run.cache_dir = (work_root / ("determinism-" + tag) / "cache").string();
  cfg.dataset.tag = data::BehaviorTag::random;
  cfg.dataset.size = 3000;
  cfg.model.ensemble_size = 2;
  cfg.model.hidden = {32, 32};
  cfg.model.batch_size = 128;
  cfg.model.max_epochs = 3;
  cfg.policy.epochs = 3;
  cfg.policy.updates_per_epoch = 100;
  cfg.policy.rollouts_per_epoch = 100;
  cfg.policy.batch_size = 128;
  cfg.policy.eval_episodes = 3;
  return cfg;
}

bool resave_identical(const fs::path& file, const std::function<void(const fs::path&, const fs::path&)>& resave) {
  const fs::path copy = file.string() + ".resaved";
  resave(file, copy);
  const bool same = io::read_file(file) == io::read_file(copy);
  fs::remove(copy);
  return same;
}

Outcome determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  const harness::RunResult a = harness::run(smoke_config("a"));
  const harness::RunResult b = harness::run(smoke_config("b"));
  bool same_series = a.policy_report.epochs.size() == b.policy_report.epochs.size();
  for (std::size_t i = 0; same_series && i < a.policy_report.epochs.size(); ++i) {
    same_series = a.policy_report.epochs[i].eval_return_mean == b.policy_report.epochs[i].eval_return_mean;
  }
  const harness::ExperimentConfig cfg = smoke_config("a");
  const bool same_files = io::read_file(harness::model_file(cfg)) == io::read_file(harness::model_file(smoke_config("b"))) &&
                          io::read_file(a.dir / "agent.ckpt") == io::read_file(b.dir / "agent.ckpt");
  const bool ds_rt = resave_identical(harness::dataset_file(cfg), [](const fs::path& in, const fs::path& out) {
    data::save_dataset(data::load_dataset(in), out);
  });
  const bool model_rt = resave_identical(harness::model_file(cfg), [](const fs::path& in, const fs::path& out) {
    ckpt::save_checkpoint(ckpt::model_checkpoint(ckpt::model_from_checkpoint(ckpt::load_checkpoint(in)),
                                                 ckpt::load_checkpoint(in).config_hash),
                          out);
  });
  const bool agent_rt = resave_identical(a.dir / "agent.ckpt", [](const fs::path& in, const fs::path& out) {
    const ckpt::Checkpoint c = ckpt::load_checkpoint(in);
    ckpt::save_checkpoint(ckpt::agent_checkpoint(ckpt::agent_from_checkpoint(c), c.config_hash), out);
  });
  const bool manifests = harness::verify_manifest(a.dir) && harness::verify_manifest(b.dir);
  std::string series;
  for (const auto& e : a.policy_report.epochs) series += fmt("%.4f ", e.eval_return_mean);
  return {same_series && same_files && ds_rt && model_rt && agent_rt && manifests,
          std::string("eval series [") + series + "] identical: " + (same_series ? "yes" : "no") +
              "; model/agent files identical across reruns: " + (same_files ? "yes" : "no") +
              "; byte round-trips dataset/model/agent: " + (ds_rt ? "yes" : "no") + "/" + (model_rt ? "yes" : "no") +
              "/" + (agent_rt ? "yes" : "no") + "; manifests verify: " + (manifests ? "yes" : "no") + "; " +
              fmt("%.1f s", seconds_since(t0))};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*fn)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion all[] = {
      {1, "gradient correctness", gradient_correctness},
      {2, "value-gap identity", value_gap_identity},
      {3, "TV / JS chain", pinsker_chain},
      {4, "IPM specialization", ipm_specialization},
      {5, "lower-bound report", theorem_report},
      {6, "Bayes-optimal discriminator", bayes_discriminator},
      {7, "MLE equivalence at alpha = 0", mle_equivalence},
      {8, "penalty vs model error correlation", penalty_error_correlation},
      {9, "offline improvement and eta ordering", offline_improvement},
      {10, "alpha ablation", alpha_ablation},
      {11, "determinism and persistence", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  const char* dir = std::getenv("MOAN_ACCEPTANCE_DIR");
  work_root = fs::absolute(dir != nullptr && *dir != '\0' ? dir : "acceptance_work");
  fs::remove_all(work_root);
  fs::create_directories(work_root);

  int failures = 0;
  for (const Criterion& c : all) {
    if (!wanted.empty() && wanted.count(c.id) == 0) continue;
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
