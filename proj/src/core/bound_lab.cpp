#include "bound_lab.hpp"

#include <cmath>
#include <limits>

#include "error.hpp"

namespace moan::bound {

namespace {

MatrixXd policy_transition(const TabularMDP& mdp, const TabularPolicy& pi) {
  MatrixXd p = MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) p.row(s) += pi.pi(s, a) * mdp.next_dist(s, a);
  }
  return p;
}

VectorXd policy_reward(const TabularMDP& mdp, const TabularPolicy& pi) {
  return mdp.reward.cwiseProduct(pi.pi).rowwise().sum();
}

void check_pair(const TabularMDP& a, const TabularMDP& b) {
  require(a.n_states == b.n_states && a.n_actions == b.n_actions, ErrorCode::dimension_mismatch,
          "MDPs differ in state/action counts");
  require(a.gamma == b.gamma && a.reward == b.reward && a.mu0 == b.mu0, ErrorCode::invalid_argument,
          "MDPs must share rewards, mu0 and gamma");
}

}  // namespace

void TabularMDP::validate() const {
  require(n_states >= 1 && n_actions >= 1, ErrorCode::invalid_argument, "empty MDP");
  require(transition.rows() == n_states * n_actions && transition.cols() == n_states,
          ErrorCode::dimension_mismatch, "transition tensor has the wrong shape");
  require(reward.rows() == n_states && reward.cols() == n_actions, ErrorCode::dimension_mismatch,
          "reward matrix has the wrong shape");
  require(mu0.size() == n_states, ErrorCode::dimension_mismatch, "mu0 has the wrong length");
  require(gamma > 0.0 && gamma < 1.0, ErrorCode::invalid_argument, "gamma must lie in (0,1)");
  require(transition.minCoeff() >= 0.0 && mu0.minCoeff() >= 0.0, ErrorCode::invalid_argument,
          "negative probability");
  for (Eigen::Index i = 0; i < transition.rows(); ++i) {
    require(std::abs(transition.row(i).sum() - 1.0) <= 1e-12, ErrorCode::invalid_argument,
            "transition row does not sum to 1");
  }
  require(std::abs(mu0.sum() - 1.0) <= 1e-12, ErrorCode::invalid_argument, "mu0 does not sum to 1");
  require(reward.minCoeff() >= 0.0 && reward.maxCoeff() <= 1.0, ErrorCode::invalid_argument,
          "rewards must lie in [0,1]");
}

void TabularPolicy::validate(int n_states, int n_actions) const {
  require(pi.rows() == n_states && pi.cols() == n_actions, ErrorCode::dimension_mismatch,
          "policy matrix has the wrong shape");
  require(pi.minCoeff() >= 0.0, ErrorCode::invalid_argument, "negative policy probability");
  for (int s = 0; s < n_states; ++s) {
    require(std::abs(pi.row(s).sum() - 1.0) <= 1e-12, ErrorCode::invalid_argument,
            "policy row does not sum to 1");
  }
}

ValueResult exact_value(const TabularMDP& mdp, const TabularPolicy& pi) {
  mdp.validate();
  pi.validate(mdp.n_states, mdp.n_actions);
  const MatrixXd system =
      MatrixXd::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * policy_transition(mdp, pi);
  Eigen::FullPivLU<MatrixXd> lu(system);
  require(lu.isInvertible(), ErrorCode::runtime_failure, "exact_value: singular Bellman system");
  ValueResult out;
  out.values = lu.solve(policy_reward(mdp, pi));
  out.expected_return = mdp.mu0.dot(out.values);
  return out;
}

OccupancyMeasure occupancy(const TabularMDP& mdp, const TabularPolicy& pi) {
  mdp.validate();
  pi.validate(mdp.n_states, mdp.n_actions);
  // d^T (I - gamma P) = (1 - gamma) mu0^T
  const MatrixXd system = (MatrixXd::Identity(mdp.n_states, mdp.n_states) -
                           mdp.gamma * policy_transition(mdp, pi)).transpose();
  const VectorXd d = system.fullPivLu().solve((1.0 - mdp.gamma) * mdp.mu0);
  OccupancyMeasure out;
  out.rho = pi.pi;
  for (int s = 0; s < mdp.n_states; ++s) out.rho.row(s) *= d(s);
  return out;
}

double bellman_residual(const TabularMDP& mdp, const TabularPolicy& pi, const VectorXd& values) {
  const VectorXd backup = policy_reward(mdp, pi) + mdp.gamma * policy_transition(mdp, pi) * values;
  return (values - backup).cwiseAbs().maxCoeff();
}

double tv_distance(const VectorXd& p, const VectorXd& q) {
  require(p.size() == q.size(), ErrorCode::dimension_mismatch, "tv_distance: support sizes differ");
  require(p.minCoeff() >= 0.0 && q.minCoeff() >= 0.0, ErrorCode::invalid_argument,
          "tv_distance: negative entries");
  return 0.5 * (p - q).cwiseAbs().sum();
}

double kl_divergence(const VectorXd& p, const VectorXd& q) {
  require(p.size() == q.size(), ErrorCode::dimension_mismatch, "kl_divergence: support sizes differ");
  require(p.minCoeff() >= 0.0 && q.minCoeff() >= 0.0, ErrorCode::invalid_argument,
          "kl_divergence: negative entries");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) == 0.0) continue;
    if (q(i) == 0.0) return std::numeric_limits<double>::infinity();
    total += p(i) * std::log(p(i) / q(i));
  }
  return std::max(total, 0.0);
}

double js_divergence(const VectorXd& p, const VectorXd& q) {
  const VectorXd m = 0.5 * (p + q);
  return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m);
}

ValueGap value_gap_identity(const TabularMDP& real, const TabularMDP& model, const TabularPolicy& pi) {
  check_pair(real, model);
  const ValueResult v_real = exact_value(real, pi);
  const ValueResult v_model = exact_value(model, pi);
  const OccupancyMeasure rho_model = occupancy(model, pi);
  double expected_z = 0.0;
  for (int s = 0; s < real.n_states; ++s) {
    for (int a = 0; a < real.n_actions; ++a) {
      const double z = model.next_dist(s, a).dot(v_real.values) - real.next_dist(s, a).dot(v_real.values);
      expected_z += rho_model.rho(s, a) * z;
    }
  }
  ValueGap out;
  out.lhs = v_real.expected_return - v_model.expected_return;
  out.rhs = -real.gamma / (1.0 - real.gamma) * expected_z;
  out.abs_error = std::abs(out.lhs - out.rhs);
  return out;
}

Theorem1Report theorem1_check(const TabularMDP& real_in, const TabularMDP& model_in,
                              const TabularPolicy& pi, const TabularPolicy& pi_data,
                              double value_bound_delta) {
  check_pair(real_in, model_in);
  require(value_bound_delta > 0.0, ErrorCode::invalid_argument, "value bound must be positive");
  TabularMDP real = real_in;
  TabularMDP model = model_in;
  Theorem1Report out;

  const double v_max = exact_value(real, pi).values.cwiseAbs().maxCoeff();
  if (v_max > value_bound_delta) {
    out.reward_scale = value_bound_delta / v_max;
    real.reward *= out.reward_scale;
    model.reward *= out.reward_scale;
  }

  out.j_real = exact_value(real, pi).expected_return;
  out.j_model = exact_value(model, pi).expected_return;
  const OccupancyMeasure rho_data = occupancy(real, pi_data);
  const OccupancyMeasure rho_model = occupancy(model, pi);

  for (int s = 0; s < real.n_states; ++s) {
    for (int a = 0; a < real.n_actions; ++a) {
      out.model_error_term += rho_data.rho(s, a) *
                              tv_distance(real.next_dist(s, a).transpose(), model.next_dist(s, a).transpose());
    }
  }
  const Eigen::Map<const VectorXd> p(rho_data.rho.data(), rho_data.rho.size());
  const Eigen::Map<const VectorXd> q(rho_model.rho.data(), rho_model.rho.size());
  out.js = js_divergence(p, q);
  out.discrepancy_term = std::sqrt(2.0 * out.js);

  const double penalty = real.gamma * (out.model_error_term + out.discrepancy_term);
  out.rhs_literal = out.j_model - penalty;
  out.slack = out.j_real - out.rhs_literal;
  out.holds_literal = out.slack >= 0.0;

  // Smallest c >= 0 with j_real >= j_model - c * penalty, by bisection.
  auto holds = [&](double c) { return out.j_real >= out.j_model - c * penalty; };
  if (holds(0.0)) {
    out.c_star = 0.0;
  } else if (penalty <= 0.0) {
    out.c_star = std::numeric_limits<double>::infinity();
  } else {
    double lo = 0.0, hi = 1.0;
    while (!holds(hi)) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e300) break;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (holds(mid) ? hi : lo) = mid;
    }
    out.c_star = hi;
  }
  return out;
}

VectorXd random_simplex(int n, Rng& rng) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) {
    double u;
    do {
      u = rng.uniform();
    } while (u <= 0.0);
    v(i) = -std::log(u);  // Exp(1) draws normalize to Dirichlet(1)
  }
  return v / v.sum();
}

TabularMDP random_mdp(int n_states, int n_actions, double gamma, Rng& rng) {
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.transition.resize(n_states * n_actions, n_states);
  for (int i = 0; i < n_states * n_actions; ++i) mdp.transition.row(i) = random_simplex(n_states, rng).transpose();
  mdp.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = rng.uniform();
  }
  mdp.mu0 = random_simplex(n_states, rng);
  return mdp;
}

TabularMDP perturbed_model(const TabularMDP& real, double mix, Rng& rng) {
  TabularMDP model = real;
  for (Eigen::Index i = 0; i < model.transition.rows(); ++i) {
    VectorXd row = (1.0 - mix) * real.transition.row(i).transpose() + mix * random_simplex(real.n_states, rng);
    model.transition.row(i) = (row / row.sum()).transpose();
  }
  return model;
}

TabularPolicy random_policy(int n_states, int n_actions, Rng& rng) {
  TabularPolicy pi;
  pi.pi.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) pi.pi.row(s) = random_simplex(n_actions, rng).transpose();
  return pi;
}

}  // namespace moan::bound
