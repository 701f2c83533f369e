#pragma once

#include <span>
#include <string>
#include <vector>

#include "adversarial.hpp"

namespace moan::penalty {

enum class PenaltyMode { literal, discrepancy };
enum class SigmaAgg { max_member_std_norm, chosen_member_std_norm, mean_member_std_norm };

std::string to_string(PenaltyMode m);
std::string to_string(SigmaAgg a);
PenaltyMode mode_from_string(const std::string& s);
SigmaAgg sigma_agg_from_string(const std::string& s);

struct PenaltyConfig {
  double eta = 1.0;
  PenaltyMode mode = PenaltyMode::discrepancy;
  SigmaAgg sigma_agg = SigmaAgg::max_member_std_norm;
  int disc_samples = 1;  // model samples averaged into u

  void validate() const;
};

struct PenaltyBreakdown {
  double r_raw = 0.0;
  double sigma_term = 0.0;
  double u = 0.5;
  double disc_term = 1.0;
  double r_shaped = 0.0;
};

// Reduce per-member std-vector norms (normalized units) to one scalar.
double aggregate_std_norms(std::span<const double> member_norms, int member_index, SigmaAgg agg);

// L2 norm of exp(lv / 2) over the normalized log-variance rows.
double std_norm(std::span<const double> normalized_log_variance);

double sigma_aggregate(const model::DynamicsEnsemble& ensemble, std::span<const double> s,
                       std::span<const double> a, int member_index, const PenaltyConfig& cfg);

// u from a discriminator probability.
double discrepancy_from_prob(double d, PenaltyMode mode);

double discrepancy(const model::Discriminator& disc, std::span<const double> s, std::span<const double> a,
                   std::span<const double> s_next, double r, PenaltyMode mode);

PenaltyBreakdown reshape_reward(double r, double sigma_term, double u, double eta);

// CSV with columns r_raw, sigma_term, u, disc_term, r_shaped.
std::string penalty_csv_header();
std::string penalty_csv_row(const PenaltyBreakdown& b);

}  // namespace moan::penalty
