#include <chrono>
#include <functional>
#include <set>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "checkpoint.hpp"
#include "doctest.h"
#include "error.hpp"
#include "harness.hpp"
#include "io.hpp"

using namespace moan;
using namespace moan::harness;

namespace {

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "moan_unit_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig smoke(const fs::path& root) {
  ExperimentConfig cfg;
  cfg.run.out_dir = root.string();
  cfg.run.cache_dir = (root / "cache").string();
  cfg.dataset.tag = data::BehaviorTag::random;
  cfg.dataset.size = 3000;
  cfg.model.ensemble_size = 2;
  cfg.model.hidden = {32, 32};
  cfg.model.batch_size = 128;
  cfg.model.max_epochs = 3;
  cfg.policy.epochs = 3;
  cfg.policy.updates_per_epoch = 50;
  cfg.policy.rollouts_per_epoch = 100;
  cfg.policy.batch_size = 128;
  cfg.policy.eval_episodes = 2;
  return cfg;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ok;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(io::read_text(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

void check_numeric_columns(const fs::path& p, std::size_t first_numeric) {
  const auto rows = read_csv(p);
  REQUIRE(rows.size() >= 2);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].size() == rows[0].size());
    for (std::size_t j = first_numeric; j < rows[i].size(); ++j) {
      const double v = std::strtod(rows[i][j].c_str(), nullptr);
      CHECK_MESSAGE(std::isfinite(v), (p.string() + " row " + std::to_string(i) + " col " + rows[0][j]));
    }
  }
}

}  // namespace

TEST_CASE("smoke run writes a complete, verifiable run directory") {
  const fs::path root = work_dir("smoke");
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult r = run(smoke(root));
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 60.0);
  CHECK(r.dir == root / "run");
  for (const char* f : {"manifest.json", "config.ini", "model_metrics.csv", "policy_metrics.csv", "penalty.csv", "agent.ckpt"}) {
    CHECK_MESSAGE(fs::exists(r.dir / f), f);
  }
  CHECK_FALSE(fs::exists(r.dir / ".lock"));
  std::string why;
  CHECK(verify_manifest(r.dir, &why));
  const RunManifest m = read_manifest(r.dir);
  CHECK(m.status == "complete");
  CHECK(m.config_hash == config_hash(smoke(root)));
  CHECK(m.final_return == doctest::Approx(final_return(r.policy_report, 5)));
  CHECK(std::isfinite(m.behavior_return));

  CHECK(read_csv(r.dir / "model_metrics.csv")[0] ==
        std::vector<std::string>{"run_id", "phase", "step", "gen_nll", "gen_adv_loss", "disc_loss", "disc_accuracy",
                                 "holdout_mse_mean", "holdout_mse_min", "holdout_mse_max"});
  CHECK(read_csv(r.dir / "policy_metrics.csv")[0] ==
        std::vector<std::string>{"run_id", "phase", "step", "eval_return_mean", "eval_return_std", "critic1", "critic2",
                                 "actor", "temperature", "alpha", "truncations", "env_buffer_size",
                                 "model_buffer_size", "mean_shaped_reward", "mean_penalty"});
  CHECK(read_csv(r.dir / "penalty.csv")[0] ==
        std::vector<std::string>{"r_raw", "sigma_term", "u", "disc_term", "r_shaped"});
  check_numeric_columns(r.dir / "model_metrics.csv", 2);
  check_numeric_columns(r.dir / "policy_metrics.csv", 2);
  check_numeric_columns(r.dir / "penalty.csv", 0);
  CHECK(read_csv(r.dir / "policy_metrics.csv").size() == 1 + 3);

  // The saved config reproduces the run's hash.
  CHECK(config_hash(load_config(r.dir / "config.ini")) == m.config_hash);
}

TEST_CASE("normalization statistics agree across dataset, model and agent") {
  const fs::path root = work_dir("norms");
  const auto cfg = smoke(root);
  const auto ds = obtain_dataset(cfg, false);
  const auto tm = obtain_model(cfg, ds);
  for (int i = 0; i < ds.d_s(); ++i) {
    CHECK(tm.ensemble.input_norm.mean[i] == ds.header.state_mean[i]);
    CHECK(tm.ensemble.input_norm.stdev[i] == ds.header.state_std[i]);
    CHECK(tm.disc.state_norm.mean[i] == ds.header.state_mean[i]);
  }
  const auto agent = sac::make_offline_agent(ds, cfg.policy_config());
  CHECK(agent.state_norm.mean == ds.header.state_mean);
  CHECK(agent.state_norm.stdev == ds.header.state_std);
  bool reused = false;
  obtain_dataset(cfg, false, {}, &reused);
  CHECK(reused);
  obtain_model(cfg, ds, {}, &reused);
  CHECK(reused);
}

TEST_CASE("policy-only runs reuse the stage-1 model byte for byte") {
  const fs::path root = work_dir("stages");
  auto cfg = smoke(root);
  CHECK(code_of([&] { run(cfg, RunStages::policy_only); }) == ErrorCode::missing_artifact);
  CHECK(read_manifest(root / "run").status == "failed");
  run(cfg, RunStages::model_only);
  const auto model_bytes = io::read_file(model_file(cfg));
  const auto stamp = fs::last_write_time(model_file(cfg));
  const RunResult a = run(cfg, RunStages::policy_only);
  CHECK(io::read_file(model_file(cfg)) == model_bytes);
  CHECK(fs::last_write_time(model_file(cfg)) == stamp);
  CHECK(verify_manifest(a.dir));

  // A rerun of the whole pipeline in a fresh directory produces the same agent.
  auto again = smoke(work_dir("stages-again"));
  const RunResult b = run(again);
  CHECK(io::read_file(a.dir / "agent.ckpt") == io::read_file(b.dir / "agent.ckpt"));
  CHECK(io::read_file(model_file(again)) == model_bytes);
}

TEST_CASE("manifest verification catches corrupted or missing artifacts") {
  const fs::path root = work_dir("corrupt");
  const RunResult r = run(smoke(root));
  auto bytes = io::read_file(r.dir / "agent.ckpt");
  bytes[bytes.size() / 2] ^= 0x01;
  io::write_file_atomic(r.dir / "agent.ckpt", bytes);
  std::string why;
  CHECK_FALSE(verify_manifest(r.dir, &why));
  CHECK(why.find("agent.ckpt") != std::string::npos);
  CHECK(code_of([&] { ckpt::load_checkpoint(r.dir / "agent.ckpt"); }) == ErrorCode::format_mismatch);
  fs::remove(r.dir / "penalty.csv");
  CHECK_FALSE(verify_manifest(r.dir, &why));
}

TEST_CASE("a failing run records the failure and invalidates its artifacts") {
  const fs::path root = work_dir("failing");
  auto cfg = smoke(root);
  cfg.dataset.size = 500;  // below 10 x model batch
  CHECK(code_of([&] { run(cfg); }) == ErrorCode::invalid_argument);
  const RunManifest m = read_manifest(root / "run");
  CHECK(m.status == "failed");
  CHECK_FALSE(m.error.empty());
  for (const auto& a : m.artifacts) CHECK_FALSE(a.valid);
  CHECK_FALSE(verify_manifest(root / "run"));
  CHECK_FALSE(fs::exists(root / "run" / ".lock"));
}

TEST_CASE("a run directory can only be owned once") {
  const fs::path dir = work_dir("lock");
  DirectoryLock first(dir);
  CHECK(code_of([&] { DirectoryLock second(dir); }) == ErrorCode::io_error);
  auto cfg = smoke(dir.parent_path());
  cfg.run.run_id = "lock";
  CHECK(code_of([&] { run(cfg); }) == ErrorCode::io_error);
}

TEST_CASE("output root precedence: run.out_dir, then MOAN_OUT_DIR, then ./runs") {
  ExperimentConfig cfg;
  ::unsetenv("MOAN_OUT_DIR");
  CHECK(output_root(cfg) == fs::path("runs"));
  ::setenv("MOAN_OUT_DIR", "/tmp/moan-env-root", 1);
  CHECK(output_root(cfg) == fs::path("/tmp/moan-env-root"));
  cfg.run.out_dir = "/tmp/explicit";
  CHECK(output_root(cfg) == fs::path("/tmp/explicit"));
  ::unsetenv("MOAN_OUT_DIR");
  cfg.run.run_id = "x";
  CHECK(run_directory(cfg) == fs::path("/tmp/explicit/x"));
  CHECK(cache_directory(cfg) == run_directory(cfg));
}

TEST_CASE("sweeps cover the grid and eta = 0 equals an unpenalized run") {
  const fs::path root = work_dir("sweep");
  const auto cfg = smoke(root);
  const auto res = ablation_sweep(cfg, "eta", {0.0, 0.5}, {0, 1}, root / "sweep-eta");
  REQUIRE(res.rows.size() == 4);
  const auto rows = read_csv(res.summary_csv);
  CHECK(rows[0] == std::vector<std::string>{"param", "value", "seed", "final_return", "behavior_return", "run_dir"});
  CHECK(rows.size() == 5);
  std::set<std::pair<double, std::uint64_t>> cells;
  for (const auto& r : res.rows) {
    cells.insert({r.value, r.seed});
    CHECK(verify_manifest(r.run_dir));
  }
  CHECK(cells.size() == 4);

  auto plain = smoke(work_dir("sweep-plain"));
  plain.run.cache_dir = cfg.run.cache_dir;
  plain.penalty.eta = 0.0;
  plain.run.seed = 1;
  const RunResult direct = run(plain);
  for (const auto& r : res.rows) {
    if (r.value == 0.0 && r.seed == 1) CHECK(r.final_return == direct.manifest.final_return);
  }
  CHECK(code_of([&] { ablation_sweep(cfg, "gamma", {0.5}, {0}, root / "bad"); }) == ErrorCode::invalid_argument);
}

TEST_CASE("final_return averages the last window of evaluations") {
  sac::PolicyTrainReport r;
  for (double v : {1.0, 2.0, 3.0, 4.0}) {
    sac::EpochMetrics e;
    e.eval_return_mean = v;
    r.epochs.push_back(e);
  }
  CHECK(final_return(r, 2) == 3.5);
  CHECK(final_return(r, 10) == 2.5);
}

TEST_CASE("bound check CSV has one row per trial") {
  const fs::path dir = work_dir("bound");
  const auto s = bound_check(3, 25, dir / "b.csv");
  CHECK(s.trials == 25);
  CHECK(s.all_c_star_finite);
  CHECK(s.value_gap_max_error < 1e-8);
  const auto rows = read_csv(dir / "b.csv");
  CHECK(rows.size() == 26);
  CHECK(rows[0].front() == "trial");
  CHECK(rows[0].back() == "value_gap_error");
  CHECK(bound_check(3, 25).c_star_max == s.c_star_max);
}

TEST_CASE("gradient check of every training loss") {
  const auto g = gradcheck(7, 3);
  CHECK(g.max() <= 1e-4);
  CHECK(g.max() >= g.disc);
  CHECK(g.max() >= g.actor);
}

TEST_CASE("checkpoints round-trip and reject the wrong kind") {
  const fs::path dir = work_dir("ckpt");
  Rng rng(1);
  sac::SACAgent agent(3, 1, {8}, 0.2, rng);
  agent.state_norm = model::Normalizer{{0.1, 0.2, 0.3}, {1, 2, 3}};
  agent.log_alpha = -0.7;
  ckpt::save_checkpoint(ckpt::agent_checkpoint(agent, "h1"), dir / "a.ckpt");
  const auto c = ckpt::load_checkpoint(dir / "a.ckpt", "", "h1");
  const auto back = ckpt::agent_from_checkpoint(c);
  CHECK(back.policy.params() == agent.policy.params());
  CHECK(back.q2_target.params() == agent.q2_target.params());
  CHECK(back.log_alpha == agent.log_alpha);
  CHECK(back.state_norm.stdev == agent.state_norm.stdev);
  CHECK(code_of([&] { ckpt::load_checkpoint(dir / "a.ckpt", "model"); }) == ErrorCode::format_mismatch);
  CHECK(code_of([&] { ckpt::load_checkpoint(dir / "a.ckpt", "", "other"); }) == ErrorCode::format_mismatch);
  auto bytes = io::read_file(dir / "a.ckpt");
  bytes.resize(bytes.size() - 4);
  io::write_file_atomic(dir / "a.ckpt", bytes);
  CHECK(code_of([&] { ckpt::load_checkpoint(dir / "a.ckpt"); }) == ErrorCode::format_mismatch);
}
