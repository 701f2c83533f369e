#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "rng.hpp"

namespace moan::bound {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  // transition[s * n_actions + a] is the next-state distribution (row vector).
  MatrixXd transition;  // (n_states * n_actions) x n_states
  MatrixXd reward;      // n_states x n_actions, entries in [0, 1]
  VectorXd mu0;
  double gamma = 0.9;

  void validate() const;
  auto next_dist(int s, int a) const { return transition.row(s * n_actions + a); }
};

struct TabularPolicy {
  MatrixXd pi;  // n_states x n_actions, rows sum to 1
  void validate(int n_states, int n_actions) const;
};

struct OccupancyMeasure {
  MatrixXd rho;  // n_states x n_actions, sums to 1
  VectorXd state_marginal() const { return rho.rowwise().sum(); }
};

struct ValueResult {
  VectorXd values;
  double expected_return = 0.0;  // J = <mu0, V>
};

ValueResult exact_value(const TabularMDP& mdp, const TabularPolicy& pi);
OccupancyMeasure occupancy(const TabularMDP& mdp, const TabularPolicy& pi);

// Max-norm residual of V - (r_pi + gamma P_pi V).
double bellman_residual(const TabularMDP& mdp, const TabularPolicy& pi, const VectorXd& values);

double tv_distance(const VectorXd& p, const VectorXd& q);
// Nats. Returns +infinity when p puts mass where q has none.
double kl_divergence(const VectorXd& p, const VectorXd& q);
double js_divergence(const VectorXd& p, const VectorXd& q);

struct ValueGap {
  double lhs = 0.0;  // J(pi, M) - J(pi, M_hat)
  double rhs = 0.0;  // -gamma / (1 - gamma) * E_{rho_hat}[Z]
  double abs_error = 0.0;
};

// Simulation-lemma identity. Z(s,a) = E_{T_hat}[V_M] - E_{T}[V_M]. With the
// occupancy normalized to sum to one the exact constant in front of E[Z] is
// gamma / (1 - gamma); the un-normalized occupancy absorbs the 1 / (1 - gamma).
ValueGap value_gap_identity(const TabularMDP& real, const TabularMDP& model, const TabularPolicy& pi);

struct Theorem1Report {
  double j_real = 0.0;
  double j_model = 0.0;
  double model_error_term = 0.0;   // E_{rho_D}[d_TV(T, T_hat)]
  double discrepancy_term = 0.0;   // sqrt(2 d_JS(rho_D, rho_hat))
  double rhs_literal = 0.0;        // J(pi, M_hat) - gamma * (model_error + discrepancy)
  double slack = 0.0;              // j_real - rhs_literal
  bool holds_literal = false;
  double c_star = 0.0;             // minimal multiplier on the penalty term
  double reward_scale = 1.0;       // applied so that ||V_M||_inf <= delta
  double js = 0.0;
};

Theorem1Report theorem1_check(const TabularMDP& real, const TabularMDP& model,
                              const TabularPolicy& pi, const TabularPolicy& pi_data,
                              double value_bound_delta);

// Random instances: Dirichlet(1) transition rows, U[0,1] rewards, Dirichlet(1) mu0.
VectorXd random_simplex(int n, Rng& rng);
TabularMDP random_mdp(int n_states, int n_actions, double gamma, Rng& rng);
// Same rewards, mu0 and gamma; transitions resampled.
TabularMDP perturbed_model(const TabularMDP& real, double mix, Rng& rng);
TabularPolicy random_policy(int n_states, int n_actions, Rng& rng);

}  // namespace moan::bound
