#include "penalty.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "error.hpp"

namespace moan::penalty {

std::string to_string(PenaltyMode m) { return m == PenaltyMode::literal ? "literal" : "discrepancy"; }

std::string to_string(SigmaAgg a) {
  switch (a) {
    case SigmaAgg::max_member_std_norm: return "max_member_std_norm";
    case SigmaAgg::chosen_member_std_norm: return "chosen_member_std_norm";
    case SigmaAgg::mean_member_std_norm: return "mean_member_std_norm";
  }
  return "?";
}

PenaltyMode mode_from_string(const std::string& s) {
  if (s == "literal") return PenaltyMode::literal;
  if (s == "discrepancy") return PenaltyMode::discrepancy;
  fail(ErrorCode::invalid_argument, "unknown penalty mode '" + s + "' (literal | discrepancy)");
}

SigmaAgg sigma_agg_from_string(const std::string& s) {
  for (SigmaAgg a : {SigmaAgg::max_member_std_norm, SigmaAgg::chosen_member_std_norm, SigmaAgg::mean_member_std_norm}) {
    if (to_string(a) == s) return a;
  }
  fail(ErrorCode::invalid_argument, "unknown sigma aggregation '" + s + "'");
}

void PenaltyConfig::validate() const {
  require(std::isfinite(eta) && eta >= 0.0, ErrorCode::invalid_argument, "penalty.eta must be non-negative");
  require(disc_samples >= 1, ErrorCode::invalid_argument, "penalty.disc_samples must be >= 1");
}

double std_norm(std::span<const double> normalized_log_variance) {
  double sum = 0.0;
  for (double lv : normalized_log_variance) sum += std::exp(lv);
  return std::sqrt(sum);
}

double aggregate_std_norms(std::span<const double> member_norms, int member_index, SigmaAgg agg) {
  require(!member_norms.empty(), ErrorCode::invalid_argument, "aggregate_std_norms: no members");
  switch (agg) {
    case SigmaAgg::max_member_std_norm:
      return *std::max_element(member_norms.begin(), member_norms.end());
    case SigmaAgg::mean_member_std_norm: {
      double sum = 0.0;
      for (double v : member_norms) sum += v;
      return sum / static_cast<double>(member_norms.size());
    }
    case SigmaAgg::chosen_member_std_norm:
      require(member_index >= 0 && member_index < static_cast<int>(member_norms.size()),
              ErrorCode::invalid_argument, "chosen_member_std_norm needs a valid member index");
      return member_norms[member_index];
  }
  return 0.0;
}

double sigma_aggregate(const model::DynamicsEnsemble& ensemble, std::span<const double> s,
                       std::span<const double> a, int member_index, const PenaltyConfig& cfg) {
  std::vector<double> norms;
  for (int m = 0; m < ensemble.size(); ++m) {
    norms.push_back(std_norm(ensemble.predict(m, s, a).normalized_log_variance));
  }
  return aggregate_std_norms(norms, member_index, cfg.sigma_agg);
}

double discrepancy_from_prob(double d, PenaltyMode mode) { return mode == PenaltyMode::literal ? d : 1.0 - d; }

double discrepancy(const model::Discriminator& disc, std::span<const double> s, std::span<const double> a,
                   std::span<const double> s_next, double r, PenaltyMode mode) {
  return discrepancy_from_prob(disc.prob(s, a, s_next, r), mode);
}

PenaltyBreakdown reshape_reward(double r, double sigma_term, double u, double eta) {
  require(sigma_term >= 0.0 && eta >= 0.0 && u >= 0.0 && u <= 1.0, ErrorCode::invalid_argument,
          "reshape_reward: need sigma_term >= 0, eta >= 0 and u in [0, 1]");
  PenaltyBreakdown b;
  b.r_raw = r;
  b.sigma_term = sigma_term;
  b.u = u;
  b.disc_term = std::sqrt(2.0 * u);
  b.r_shaped = r - eta * (sigma_term + b.disc_term);
  return b;
}

std::string penalty_csv_header() { return "r_raw,sigma_term,u,disc_term,r_shaped"; }

std::string penalty_csv_row(const PenaltyBreakdown& b) {
  std::ostringstream os;
  os.precision(9);
  os << b.r_raw << ',' << b.sigma_term << ',' << b.u << ',' << b.disc_term << ',' << b.r_shaped;
  return os.str();
}

}  // namespace moan::penalty
