#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "bound_lab.hpp"
#include "checkpoint.hpp"
#include "error.hpp"
#include "io.hpp"

#ifndef MOAN_VERSION
#define MOAN_VERSION "0.0.0"
#endif

namespace moan::harness {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

Artifact describe(const fs::path& run_dir, const fs::path& file) {
  Artifact a;
  const fs::path rel = fs::relative(file, run_dir);
  const bool inside = !rel.empty() && rel.native().rfind("..", 0) != 0;
  a.path = inside ? rel.generic_string() : fs::absolute(file).lexically_normal().generic_string();
  a.bytes = fs::file_size(file);
  a.crc32 = io::crc32_file(file);
  return a;
}

fs::path resolve_artifact(const fs::path& run_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : run_dir / path;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(threads, static_cast<int>(n)); ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> g(mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

std::string code_version() { return std::string("moan ") + MOAN_VERSION; }

fs::path output_root(const ExperimentConfig& cfg) {
  if (!cfg.run.out_dir.empty()) return cfg.run.out_dir;
  if (const char* env_dir = std::getenv("MOAN_OUT_DIR"); env_dir != nullptr && *env_dir != '\0') return env_dir;
  return "runs";
}

fs::path run_directory(const ExperimentConfig& cfg) { return output_root(cfg) / cfg.run.run_id; }

fs::path cache_directory(const ExperimentConfig& cfg) {
  return cfg.run.cache_dir.empty() ? run_directory(cfg) : fs::path(cfg.run.cache_dir);
}

fs::path behavior_directory(const ExperimentConfig& cfg) {
  if (!cfg.dataset.behavior_dir.empty()) return cfg.dataset.behavior_dir;
  return cache_directory(cfg) / ("behavior-" + behavior_hash(cfg));
}

fs::path dataset_file(const ExperimentConfig& cfg) {
  if (!cfg.dataset.path.empty()) return cfg.dataset.path;
  return cache_directory(cfg) / ("dataset-" + dataset_hash(cfg) + ".bin");
}

fs::path model_file(const ExperimentConfig& cfg) {
  return cache_directory(cfg) / ("model-" + model_hash(cfg) + ".ckpt");
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    fail(ErrorCode::io_error, "directory " + dir.string() + " is locked by another run (remove " + path_.string() +
                                  " if no run is active)");
  }
  std::fprintf(f, "%s\n", utc_now().c_str());
  std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

ordered_json manifest_json(const RunManifest& m) {
  ordered_json j;
  j["magic"] = kManifestMagic;
  j["version"] = kManifestVersion;
  j["run_id"] = m.run_id;
  j["config_hash"] = m.config_hash;
  j["code_version"] = m.code_version;
  j["seeds"] = {{"dataset", m.dataset_seed}, {"run", m.run_seed}};
  j["started"] = m.started;
  j["finished"] = m.finished;
  j["status"] = m.status;
  j["stages"] = m.stages;
  ordered_json arts = ordered_json::array();
  for (const auto& a : m.artifacts) {
    arts.push_back({{"path", a.path}, {"bytes", a.bytes}, {"crc32", a.crc32}, {"valid", a.valid}});
  }
  j["artifacts"] = arts;
  j["final_return"] = m.final_return;
  j["behavior_return"] = m.behavior_return;
  if (!m.error.empty()) j["error"] = m.error;
  return j;
}

void write_manifest(const fs::path& run_dir, const RunManifest& m) {
  io::write_text_atomic(run_dir / "manifest.json", manifest_json(m).dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& run_dir) {
  const fs::path p = run_dir / "manifest.json";
  ordered_json j;
  try {
    j = ordered_json::parse(io::read_text(p));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::format_mismatch, p.string() + ": " + e.what());
  }
  if (j.value("magic", "") != kManifestMagic || j.value("version", -1) != kManifestVersion) {
    fail(ErrorCode::format_mismatch, p.string() + ": not a run manifest");
  }
  RunManifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.code_version = j.at("code_version").get<std::string>();
    m.dataset_seed = j.at("seeds").at("dataset").get<std::uint64_t>();
    m.run_seed = j.at("seeds").at("run").get<std::uint64_t>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    m.status = j.at("status").get<std::string>();
    m.stages = j.at("stages");
    for (const auto& a : j.at("artifacts")) {
      m.artifacts.push_back({a.at("path").get<std::string>(), a.at("crc32").get<std::uint32_t>(),
                             a.at("bytes").get<std::uintmax_t>(), a.at("valid").get<bool>()});
    }
    m.final_return = j.at("final_return").get<double>();
    m.behavior_return = j.at("behavior_return").get<double>();
    m.error = j.value("error", "");
  } catch (const std::exception& e) {
    fail(ErrorCode::format_mismatch, p.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

bool verify_manifest(const fs::path& run_dir, std::string* why) {
  auto reject = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  RunManifest m;
  try {
    m = read_manifest(run_dir);
  } catch (const std::exception& e) {
    return reject(e.what());
  }
  if (m.status != "complete") return reject("run status is '" + m.status + "'");
  for (const auto& a : m.artifacts) {
    const fs::path p = resolve_artifact(run_dir, a.path);
    if (!a.valid) return reject(a.path + " is marked invalid");
    if (!fs::exists(p)) return reject(a.path + " is missing");
    if (fs::file_size(p) != a.bytes) return reject(a.path + " has a different size");
    if (io::crc32_file(p) != a.crc32) return reject(a.path + " fails its checksum");
  }
  return true;
}

behavior::BehaviorBundle obtain_behavior(const ExperimentConfig& cfg, bool train_if_missing, const Logger& log) {
  const fs::path dir = behavior_directory(cfg);
  if (behavior::bundle_exists(dir) || !train_if_missing) return behavior::load_bundle(dir);
  say(log, "training behavior policies online (" + std::to_string(cfg.behavior.total_steps) + " steps) into " +
               dir.string());
  const env::ContinuousEnv env = env::ContinuousEnv::make(cfg.env);
  behavior::BehaviorBundle b = behavior::train_behavior(env, cfg.behavior_policy_config(), cfg.online_config());
  behavior::save_bundle(b, dir);
  say(log, "behavior: medium return " + num(b.medium_return) + " at step " + std::to_string(b.medium_step) +
               ", expert return " + num(b.expert_return) + " at step " + std::to_string(b.expert_step));
  return b;
}

data::TransitionDataset obtain_dataset(const ExperimentConfig& cfg, bool train_behavior_if_missing, const Logger& log,
                                       bool* reused) {
  const fs::path file = dataset_file(cfg);
  if (!cfg.dataset.path.empty()) {
    if (reused) *reused = true;
    data::TransitionDataset ds = data::load_dataset(file);
    require(ds.header.env_id == env::to_string(cfg.env), ErrorCode::invalid_argument,
            file.string() + ": dataset env '" + ds.header.env_id + "' does not match env.kind");
    return ds;
  }
  const std::string hash = dataset_hash(cfg);
  if (fs::exists(file)) {
    if (reused) *reused = true;
    return data::load_dataset(file, hash);
  }
  if (reused) *reused = false;
  const env::ContinuousEnv env = env::ContinuousEnv::make(cfg.env);
  behavior::BehaviorBundle bundle;
  const behavior::BehaviorBundle* bp = nullptr;
  if (cfg.dataset.tag != data::BehaviorTag::random) {
    bundle = obtain_behavior(cfg, train_behavior_if_missing, log);
    bp = &bundle;
  }
  say(log, "generating " + data::to_string(cfg.dataset.tag) + " dataset (" + std::to_string(cfg.dataset.size) +
               " transitions)");
  data::TransitionDataset ds = behavior::generate_dataset(env, cfg.dataset.tag, cfg.dataset.size, cfg.dataset.seed, bp);
  ds.header.config_hash = hash;
  fs::create_directories(file.parent_path());
  data::save_dataset(ds, file);
  return ds;
}

model::TrainedModel obtain_model(const ExperimentConfig& cfg, const data::TransitionDataset& dataset, const Logger& log,
                                 bool* reused) {
  const fs::path file = model_file(cfg);
  const std::string hash = model_hash(cfg);
  if (fs::exists(file)) {
    if (reused) *reused = true;
    say(log, "reusing stage-1 model " + file.string());
    return ckpt::model_from_checkpoint(ckpt::load_checkpoint(file, "model", hash));
  }
  if (reused) *reused = false;
  say(log, "stage 1: adversarial model training");
  model::TrainedModel m = model::train_adversarial(dataset, cfg.model_config(), [&](int epoch, const model::ModelTrainReport& r) {
    double mse = 0.0;
    for (double v : r.holdout_mse.back()) mse += v;
    mse /= static_cast<double>(r.holdout_mse.back().size());
    say(log, "  model epoch " + std::to_string(epoch) + ": nll " + num(r.gen_nll.back()) + ", disc " +
                 num(r.disc_loss.back()) + ", holdout mse " + num(mse));
  });
  fs::create_directories(file.parent_path());
  ckpt::save_checkpoint(ckpt::model_checkpoint(m, hash), file);
  return m;
}

double final_return(const sac::PolicyTrainReport& report, int window) {
  require(!report.epochs.empty(), ErrorCode::invalid_argument, "final_return: no epochs");
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(window, 1)), report.epochs.size());
  double sum = 0.0;
  for (std::size_t i = report.epochs.size() - n; i < report.epochs.size(); ++i) sum += report.epochs[i].eval_return_mean;
  return sum / static_cast<double>(n);
}

RunResult run(const ExperimentConfig& cfg, RunStages stages, const Logger& log) {
  cfg.validate();
  RunResult result;
  result.dir = run_directory(cfg);
  DirectoryLock lock(result.dir);
  RunManifest& man = result.manifest;
  man.run_id = cfg.run.run_id;
  man.config_hash = config_hash(cfg);
  man.code_version = code_version();
  man.dataset_seed = cfg.dataset.seed;
  man.run_seed = cfg.run.seed;
  man.started = utc_now();
  man.status = "running";
  write_manifest(result.dir, man);

  std::vector<fs::path> files;
  try {
    io::write_text_atomic(result.dir / "config.ini", dump_config(cfg));
    files.push_back(result.dir / "config.ini");

    bool ds_reused = false;
    const data::TransitionDataset ds = obtain_dataset(cfg, false, log, &ds_reused);
    files.push_back(dataset_file(cfg));
    man.behavior_return = ds.header.extra.value("episode_return_mean", 0.0);
    man.stages["dataset"] = {{"hash", cfg.dataset.path.empty() ? dataset_hash(cfg) : ds.header.config_hash},
                             {"reused", ds_reused}};

    bool model_reused = false;
    model::TrainedModel tm;
    if (stages == RunStages::policy_only) {
      require(fs::exists(model_file(cfg)), ErrorCode::missing_artifact,
              "no stage-1 model at " + model_file(cfg).string() + "; run `moan train-model` with the same config first");
      tm = obtain_model(cfg, ds, log, &model_reused);
    } else {
      tm = obtain_model(cfg, ds, log, &model_reused);
    }
    files.push_back(model_file(cfg));
    man.stages["model"] = {{"hash", model_hash(cfg)}, {"reused", model_reused}, {"stop_epoch", tm.report.stop_epoch},
                           {"best_epoch", tm.report.best_epoch}};
    result.model_report = tm.report;
    io::write_text_atomic(result.dir / "model_metrics.csv", model_metrics_csv(cfg.run.run_id, tm.report));
    files.push_back(result.dir / "model_metrics.csv");

    if (stages != RunStages::model_only) {
      say(log, "stage 2: policy optimization");
      const env::ContinuousEnv env = env::ContinuousEnv::make(cfg.env);
      const sac::PolicyTrainConfig pcfg = cfg.policy_config();
      sac::SACAgent agent = sac::make_offline_agent(ds, pcfg);
      result.policy_report =
          sac::train_policy(agent, ds, tm.ensemble, tm.disc, cfg.penalty, env, pcfg, [&](const sac::EpochMetrics& m) {
            say(log, "  policy epoch " + std::to_string(m.epoch) + ": eval return " + num(m.eval_return_mean) +
                         " +- " + num(m.eval_return_std) + ", critic " + num(0.5 * (m.critic1 + m.critic2)) +
                         ", alpha " + num(m.alpha) + ", truncations " + std::to_string(m.truncations));
          });
      ckpt::save_checkpoint(ckpt::agent_checkpoint(agent, policy_hash(cfg)), result.dir / "agent.ckpt");
      io::write_text_atomic(result.dir / "policy_metrics.csv", policy_metrics_csv(cfg.run.run_id, result.policy_report));
      io::write_text_atomic(result.dir / "penalty.csv", penalty_csv(result.policy_report.last_breakdowns));
      files.push_back(result.dir / "agent.ckpt");
      files.push_back(result.dir / "policy_metrics.csv");
      files.push_back(result.dir / "penalty.csv");
      man.final_return = final_return(result.policy_report, cfg.run.final_window);
      man.stages["policy"] = {{"hash", policy_hash(cfg)}, {"epochs", result.policy_report.epochs.size()}};
      say(log, "final return " + num(man.final_return) + " (dataset behavior return " + num(man.behavior_return) + ")");
    }
    for (const auto& f : files) man.artifacts.push_back(describe(result.dir, f));
    man.status = "complete";
    man.finished = utc_now();
    write_manifest(result.dir, man);
  } catch (const std::exception& e) {
    man.status = "failed";
    man.error = e.what();
    man.finished = utc_now();
    man.artifacts.clear();
    for (const auto& f : files) {
      if (!fs::exists(f)) continue;
      Artifact a = describe(result.dir, f);
      a.valid = false;
      man.artifacts.push_back(a);
    }
    write_manifest(result.dir, man);
    throw;
  }
  return result;
}

SweepResult ablation_sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<double>& values,
                           const std::vector<std::uint64_t>& seeds, const fs::path& sweep_dir, int threads,
                           const Logger& log) {
  require(param == "alpha" || param == "eta", ErrorCode::invalid_argument,
          "sweep parameter must be alpha or eta, got '" + param + "'");
  require(!values.empty() && !seeds.empty(), ErrorCode::invalid_argument, "sweep needs values and seeds");
  std::vector<ExperimentConfig> runs;
  for (double v : values) {
    for (std::uint64_t s : seeds) {
      ExperimentConfig c = cfg;
      if (param == "alpha") {
        c.model.alpha = v;
      } else {
        c.penalty.eta = v;
      }
      c.run.seed = s;
      c.run.out_dir = sweep_dir.string();
      if (c.run.cache_dir.empty()) c.run.cache_dir = (sweep_dir / "cache").string();
      c.run.run_id = param + "_" + num(v) + "_seed" + std::to_string(s);
      c.validate();
      runs.push_back(c);
    }
  }
  fs::create_directories(cache_directory(runs.front()));
  obtain_dataset(runs.front(), false, log);
  std::vector<std::size_t> unique_models;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    bool seen = false;
    for (std::size_t j : unique_models) seen = seen || model_hash(runs[j]) == model_hash(runs[i]);
    if (!seen) unique_models.push_back(i);
  }
  const data::TransitionDataset ds = obtain_dataset(runs.front(), false);
  parallel_for(unique_models.size(), threads, [&](std::size_t k) { obtain_model(runs[unique_models[k]], ds, log); });

  SweepResult out;
  out.rows.resize(runs.size());
  parallel_for(runs.size(), threads, [&](std::size_t i) {
    say(log, "sweep run " + runs[i].run.run_id);
    const RunResult r = run(runs[i], RunStages::both, log);
    SweepRow& row = out.rows[i];
    row.param = param;
    row.value = param == "alpha" ? runs[i].model.alpha : runs[i].penalty.eta;
    row.seed = runs[i].run.seed;
    row.final_return = r.manifest.final_return;
    row.behavior_return = r.manifest.behavior_return;
    row.run_dir = r.dir.string();
  });
  out.summary_csv = sweep_dir / ("summary_" + param + ".csv");
  io::write_text_atomic(out.summary_csv, sweep_csv(out.rows));
  return out;
}

std::string model_metrics_csv(const std::string& run_id, const model::ModelTrainReport& r) {
  std::string out = "run_id,phase,step,gen_nll,gen_adv_loss,disc_loss,disc_accuracy,holdout_mse_mean,holdout_mse_min,holdout_mse_max\n";
  for (std::size_t e = 0; e < r.gen_nll.size(); ++e) {
    const auto& mse = r.holdout_mse[e];
    double mean = 0.0;
    for (double v : mse) mean += v;
    mean /= static_cast<double>(mse.size());
    out += run_id + ",model," + std::to_string(e) + "," + num(r.gen_nll[e]) + "," + num(r.gen_adv_loss[e]) + "," +
           num(r.disc_loss[e]) + "," + num(r.disc_accuracy[e]) + "," + num(mean) + "," +
           num(*std::min_element(mse.begin(), mse.end())) + "," + num(*std::max_element(mse.begin(), mse.end())) +
           "\n";
  }
  return out;
}

std::string policy_metrics_csv(const std::string& run_id, const sac::PolicyTrainReport& r) {
  std::string out =
      "run_id,phase,step,eval_return_mean,eval_return_std,critic1,critic2,actor,temperature,alpha,truncations,"
      "env_buffer_size,model_buffer_size,mean_shaped_reward,mean_penalty\n";
  for (const auto& m : r.epochs) {
    out += run_id + ",policy," + std::to_string(m.epoch) + "," + num(m.eval_return_mean) + "," +
           num(m.eval_return_std) + "," + num(m.critic1) + "," + num(m.critic2) + "," + num(m.actor) + "," +
           num(m.temperature) + "," + num(m.alpha) + "," + std::to_string(m.truncations) + "," +
           std::to_string(m.env_buffer_size) + "," + std::to_string(m.model_buffer_size) + "," +
           num(m.mean_shaped_reward) + "," + num(m.mean_penalty) + "\n";
  }
  return out;
}

std::string penalty_csv(const std::vector<penalty::PenaltyBreakdown>& rows) {
  std::string out = penalty::penalty_csv_header() + "\n";
  for (const auto& b : rows) {
    out += num(b.r_raw) + "," + num(b.sigma_term) + "," + num(b.u) + "," + num(b.disc_term) + "," + num(b.r_shaped) + "\n";
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "param,value,seed,final_return,behavior_return,run_dir\n";
  for (const auto& r : rows) {
    out += r.param + "," + num(r.value) + "," + std::to_string(r.seed) + "," + num(r.final_return) + "," +
           num(r.behavior_return) + "," + r.run_dir + "\n";
  }
  return out;
}

BoundCheckSummary bound_check(std::uint64_t seed, int trials, const fs::path& out_csv) {
  require(trials >= 1, ErrorCode::invalid_argument, "bound_check: trials must be >= 1");
  BoundCheckSummary s;
  s.trials = trials;
  std::vector<double> c_stars;
  std::string csv = "trial,seed,lhs,j_model,model_error_term,discrepancy_term,rhs_literal,slack,holds_literal,c_star,reward_scale,js,"
      "value_gap_error\n";
  int holds = 0;
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(t));
    Rng rng(trial_seed);
    const bound::TabularMDP real = bound::random_mdp(5, 3, 0.9, rng);
    const bound::TabularMDP model = bound::perturbed_model(real, rng.uniform(), rng);
    const bound::TabularPolicy pi = bound::random_policy(5, 3, rng);
    const bound::TabularPolicy pi_data = bound::random_policy(5, 3, rng);
    const bound::Theorem1Report r = bound::theorem1_check(real, model, pi, pi_data, 1.0);
    const double gap = bound::value_gap_identity(real, model, pi).abs_error;
    s.value_gap_max_error = std::max(s.value_gap_max_error, gap);
    holds += r.holds_literal ? 1 : 0;
    s.all_c_star_finite = s.all_c_star_finite && std::isfinite(r.c_star);
    c_stars.push_back(r.c_star);
    csv += std::to_string(t) + "," + std::to_string(trial_seed) + "," + num(r.j_real) + "," + num(r.j_model) + "," + num(r.model_error_term) + "," +
           num(r.discrepancy_term) + "," + num(r.rhs_literal) + "," + num(r.slack) + "," +
           (r.holds_literal ? "1" : "0") + "," + num(r.c_star) + "," + num(r.reward_scale) + "," + num(r.js) + "," + num(gap) + "\n";
  }
  std::sort(c_stars.begin(), c_stars.end());
  s.literal_hold_rate = static_cast<double>(holds) / trials;
  s.c_star_max = c_stars.back();
  s.c_star_median = c_stars[c_stars.size() / 2];
  if (!out_csv.empty()) {
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    io::write_text_atomic(out_csv, csv);
  }
  return s;
}

double GradCheckSummary::max() const {
  return std::max({disc, gen_alpha0, gen_alpha1, critic, actor, temperature});
}

GradCheckSummary gradcheck(std::uint64_t seed, int nets) {
  require(nets >= 1, ErrorCode::invalid_argument, "gradcheck: nets must be >= 1");
  using nn::Matrix;
  using nn::Network;
  using nn::NetSpec;
  Rng rng(derive_seed(seed, 0x96c));
  auto random_matrix = [&](Eigen::Index r, Eigen::Index c, double scale) {
    Matrix<double> m(r, c);
    for (Eigen::Index j = 0; j < c; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
    }
    return m;
  };
  auto with_params = [](Network<double> net, std::span<const double> p) {
    std::copy(p.begin(), p.end(), net.params().begin());
    return net;
  };
  const int d_s = 2, d_a = 1, k = d_s + 1, b = 6;
  GradCheckSummary s;
  for (int n = 0; n < nets; ++n) {
    Network<double> disc(NetSpec::mlp(2 * d_s + d_a + 1, {8, 8}, 1, nn::OutputHead::sigmoid_scalar, nn::Activation::tanh));
    disc.init_uniform(rng);
    const Matrix<double> real = random_matrix(2 * d_s + d_a + 1, b, 1.0);
    const Matrix<double> fake = random_matrix(2 * d_s + d_a + 1, b, 1.0);
    const auto d_obj = model::disc_objective<double>(disc, real, fake);
    s.disc = std::max(s.disc, nn::grad_check(disc.params(), d_obj.grad, [&](std::span<const double> p) {
      return model::disc_objective<double>(with_params(disc, p), real, fake, false).value;
    }));

    Network<double> member(NetSpec::mlp(d_s + d_a, {8, 8}, 2 * k, nn::OutputHead::gaussian_diag, nn::Activation::tanh));
    member.init_uniform(rng);
    model::GenBatch<double> gb;
    gb.inputs = random_matrix(d_s + d_a, b, 1.0);
    gb.targets = random_matrix(k, b, 1.0);
    gb.disc_head = random_matrix(d_s + d_a, b, 1.0);
    gb.disc_offset = random_matrix(k, b, 0.5);
    gb.disc_scale = random_matrix(k, 1, 1.0).col(0);
    gb.noise = random_matrix(k, b, 1.0);
    for (double alpha : {0.0, 1.0}) {
      const auto g = model::gen_objective<double>(member, disc, gb, alpha);
      const double err = nn::grad_check(member.params(), g.grad, [&](std::span<const double> p) {
        return model::gen_objective<double>(with_params(member, p), disc, gb, alpha).value;
      });
      (alpha == 0.0 ? s.gen_alpha0 : s.gen_alpha1) = std::max(alpha == 0.0 ? s.gen_alpha0 : s.gen_alpha1, err);
    }

    Network<double> q1(NetSpec::mlp(d_s + d_a, {8, 8}, 1, nn::OutputHead::linear, nn::Activation::tanh));
    Network<double> q2(q1.spec());
    q1.init_uniform(rng);
    q2.init_uniform(rng);
    const Matrix<double> sa = random_matrix(d_s + d_a, b, 1.0);
    const Matrix<double> y = random_matrix(1, b, 1.0);
    std::vector<double> gq(q1.param_count(), 0.0);
    sac::critic_loss<double>(q1, sa, y, gq);
    s.critic = std::max(s.critic, nn::grad_check(q1.params(), gq, [&](std::span<const double> p) {
      return sac::critic_loss<double>(with_params(q1, p), sa, y, {});
    }));

    Network<double> policy(NetSpec::mlp(d_s, {8, 8}, 2 * d_a, nn::OutputHead::gaussian_diag, nn::Activation::tanh));
    policy.init_uniform(rng);
    const Matrix<double> st = random_matrix(d_s, b, 1.0);
    const Matrix<double> eps = random_matrix(d_a, b, 1.0);
    std::vector<double> gp(policy.param_count(), 0.0);
    const auto al = sac::actor_loss<double>(policy, q1, q2, st, eps, 0.3, gp);
    s.actor = std::max(s.actor, nn::grad_check(policy.params(), gp, [&](std::span<const double> p) {
      return sac::actor_loss<double>(with_params(policy, p), q1, q2, st, eps, 0.3, {}).value;
    }));

    const std::vector<double> lps{al.mean_log_prob, -0.7, 1.3};
    const double log_alpha = rng.normal();
    double g_alpha = 0.0;
    sac::temperature_loss(log_alpha, lps, -1.0, &g_alpha);
    const std::vector<double> la{log_alpha}, ga{g_alpha};
    s.temperature = std::max(s.temperature, nn::grad_check(la, ga, [&](std::span<const double> p) {
      return sac::temperature_loss(p[0], lps, -1.0);
    }));
  }
  return s;
}

sac::EvalResult evaluate_checkpoint(const ExperimentConfig& cfg, const fs::path& agent_ckpt, int episodes,
                                    std::uint64_t seed) {
  const sac::SACAgent agent = ckpt::agent_from_checkpoint(ckpt::load_checkpoint(agent_ckpt, "agent"));
  const env::ContinuousEnv env = env::ContinuousEnv::make(cfg.env);
  require(agent.d_s() == env.state_dim && agent.d_a() == env.action_dim, ErrorCode::dimension_mismatch,
          "agent checkpoint does not match env " + env.id());
  return sac::evaluate_policy(env, agent, episodes, seed);
}

}  // namespace moan::harness
