#include <cmath>
#include <vector>

#include "behavior.hpp"
#include "doctest.h"
#include "error.hpp"
#include "penalty.hpp"

using namespace moan;
using namespace moan::penalty;

namespace {

model::DynamicsEnsemble random_ensemble(int n, std::uint64_t seed) {
  model::DynamicsEnsemble ens(4, 2, n, {16});
  Rng rng(seed);
  for (auto& m : ens.members) {
    m.init_uniform(rng);
    for (float& p : m.params()) p *= 3.0f;
  }
  return ens;
}

}  // namespace

TEST_CASE("reshape_reward arithmetic") {
  CHECK(reshape_reward(1.0, 0.0, 0.5, 1.0).r_shaped == doctest::Approx(0.0));
  CHECK(reshape_reward(1.0, 0.2, 0.5, 2.0).r_shaped == doctest::Approx(-1.4));
  const auto b = reshape_reward(0.3, 0.7, 0.18, 0.0);
  CHECK(b.r_shaped == 0.3);
  CHECK(b.disc_term == doctest::Approx(0.6));
  CHECK(b.r_raw == 0.3);
  CHECK_THROWS_AS(reshape_reward(0.0, -0.1, 0.5, 1.0), Error);
  CHECK_THROWS_AS(reshape_reward(0.0, 0.1, 1.5, 1.0), Error);
  CHECK_THROWS_AS(reshape_reward(0.0, 0.1, 0.5, -1.0), Error);
}

TEST_CASE("reshaped reward is monotone in sigma, u and eta and stays within its bounds") {
  Rng rng(1);
  for (int i = 0; i < 5000; ++i) {
    const double r = rng.normal(), sigma = 3 * rng.uniform(), u = rng.uniform(0.001, 0.999), eta = 2 * rng.uniform();
    const double base = reshape_reward(r, sigma, u, eta).r_shaped;
    CHECK(reshape_reward(r, sigma + 0.1, u, eta).r_shaped <= base);
    CHECK(reshape_reward(r, sigma, std::min(1.0, u + 0.01), eta).r_shaped <= base);
    CHECK(reshape_reward(r, sigma, u, eta + 0.1).r_shaped <= base);
    CHECK(base <= r);
    CHECK(base >= r - eta * (sigma + std::sqrt(2.0)) - 1e-12);
  }
}

TEST_CASE("std_norm of unit variances is sqrt(d_s + 1)") {
  CHECK(std_norm(std::vector<double>{0, 0, 0, 0, 0}) == doctest::Approx(std::sqrt(5.0)));
  CHECK(std_norm(std::vector<double>{std::log(4.0)}) == doctest::Approx(2.0));
  // A zero-parameter ensemble has unit normalized variance everywhere.
  model::DynamicsEnsemble ens(4, 2, 3, {8});
  PenaltyConfig cfg;
  CHECK(sigma_aggregate(ens, std::vector<double>{0, 0, 0, 0}, std::vector<double>{0, 0}, 0, cfg) ==
        doctest::Approx(std::sqrt(5.0)).epsilon(1e-6));
}

TEST_CASE("aggregation modes: ordering on random ensembles, agreement for one member") {
  const auto ens = random_ensemble(5, 2);
  Rng rng(3);
  PenaltyConfig mx, mean, chosen;
  mean.sigma_agg = SigmaAgg::mean_member_std_norm;
  chosen.sigma_agg = SigmaAgg::chosen_member_std_norm;
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> s{rng.normal(), rng.normal(), rng.normal(), rng.normal()}, a{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const int m = static_cast<int>(rng.below(5));
    const double vmax = sigma_aggregate(ens, s, a, m, mx);
    const double vmean = sigma_aggregate(ens, s, a, m, mean);
    const double vchosen = sigma_aggregate(ens, s, a, m, chosen);
    CHECK(vmax >= vmean);
    CHECK(vmean >= 0.0);
    CHECK(vmax >= vchosen);
    CHECK(vchosen == doctest::Approx(std_norm(ens.predict(m, s, a).normalized_log_variance)));
  }
  const auto one = random_ensemble(1, 4);
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4}, a{0.5, -0.5};
  const double v = sigma_aggregate(one, s, a, 0, mx);
  CHECK(sigma_aggregate(one, s, a, 0, mean) == doctest::Approx(v));
  CHECK(sigma_aggregate(one, s, a, 0, chosen) == doctest::Approx(v));
  CHECK_THROWS_AS(aggregate_std_norms(std::vector<double>{1.0, 2.0}, 7, SigmaAgg::chosen_member_std_norm), Error);
}

TEST_CASE("discrepancy modes sum to one; an untrained discriminator gives 0.5") {
  model::Discriminator disc(4, 2, {8});
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4}, a{0.5, -0.5}, sn{0.2, 0.1, 0.0, -0.1};
  CHECK(discrepancy(disc, s, a, sn, 0.3, PenaltyMode::literal) == doctest::Approx(0.5));
  CHECK(discrepancy(disc, s, a, sn, 0.3, PenaltyMode::discrepancy) == doctest::Approx(0.5));
  Rng rng(5);
  disc.net.init_uniform(rng);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> x{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const double lit = discrepancy(disc, s, a, x, rng.normal(), PenaltyMode::literal);
    const double dis = discrepancy_from_prob(lit, PenaltyMode::discrepancy);
    CHECK(lit + dis == doctest::Approx(1.0));
    CHECK(lit > 0.0);
    CHECK(lit < 1.0);
  }
}

TEST_CASE("a trained discriminator flags off-support next states") {
  const auto env = env::ContinuousEnv::make(env::EnvKind::pointmass2d);
  const auto ds = behavior::generate_dataset(env, data::BehaviorTag::random, 8000, 4);
  model::ModelTrainConfig cfg;
  cfg.ensemble_size = 2;
  cfg.hidden = {32, 32};
  cfg.disc_hidden = {32, 32};
  cfg.max_epochs = 10;
  cfg.patience = 10;
  cfg.lr_disc = 3e-3;
  cfg.seed = 3;
  const auto tm = model::train_adversarial(ds, cfg);
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const auto t = ds.at(rng.below(ds.size()));
    const std::vector<double> s(t.s.begin(), t.s.end()), a(t.a.begin(), t.a.end());
    std::vector<double> far(t.s_next.begin(), t.s_next.end());
    far[0] += rng.uniform() < 0.5 ? 3.0 : -3.0;
    far[1] += rng.uniform() < 0.5 ? 3.0 : -3.0;
    CHECK(discrepancy(tm.disc, s, a, far, t.r, PenaltyMode::discrepancy) >= 0.8);
  }
}

TEST_CASE("penalty CSV rows line up with the header") {
  const auto b = reshape_reward(1.0, 0.25, 0.5, 2.0);
  CHECK(penalty_csv_header() == "r_raw,sigma_term,u,disc_term,r_shaped");
  CHECK(penalty_csv_row(b) == "1,0.25,0.5,1,-1.5");
  PenaltyConfig bad;
  bad.eta = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(mode_from_string("literal") == PenaltyMode::literal);
  CHECK(sigma_agg_from_string("mean_member_std_norm") == SigmaAgg::mean_member_std_norm);
  CHECK_THROWS_AS(mode_from_string("sideways"), Error);
}
