#include "moan.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <mutex>
#include <new>
#include <string>
#include <vector>

#include "config.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "harness.hpp"

struct moan_config {
  moan::harness::ExperimentConfig cfg;
};

struct moan_dataset {
  moan::data::TransitionDataset ds;
};

namespace {

thread_local std::string last_error;

std::mutex log_mu;
moan_log_fn log_fn = nullptr;
void* log_user = nullptr;

void emit(const std::string& line) {
  std::lock_guard<std::mutex> g(log_mu);
  if (log_fn != nullptr) log_fn(line.c_str(), log_user);
}

moan::harness::Logger logger() {
  {
    std::lock_guard<std::mutex> g(log_mu);
    if (log_fn == nullptr) return {};
  }
  return emit;
}

template <typename F>
moan_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return MOAN_OK;
  } catch (const moan::Error& e) {
    last_error = e.what();
    return static_cast<moan_status>(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return MOAN_ERR_RUNTIME;
  } catch (const std::exception& e) {
    last_error = e.what();
    return MOAN_ERR_RUNTIME;
  } catch (...) {
    last_error = "unknown failure";
    return MOAN_ERR_RUNTIME;
  }
}

moan_status null_argument(const char* what) {
  last_error = std::string(what) + " is NULL";
  return MOAN_ERR_NULL_ARGUMENT;
}

#define MOAN_NONNULL(p) \
  if ((p) == nullptr) return null_argument(#p)

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put_string(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

}  // namespace

extern "C" {

const char* moan_version(void) {
  static const std::string v = moan::harness::code_version();
  return v.c_str();
}

const char* moan_status_name(moan_status status) {
  switch (status) {
    case MOAN_OK: return "ok";
    case MOAN_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MOAN_ERR_DIMENSION_MISMATCH: return "dimension_mismatch";
    case MOAN_ERR_NON_FINITE: return "non_finite";
    case MOAN_ERR_PARSE: return "parse_error";
    case MOAN_ERR_IO: return "io_error";
    case MOAN_ERR_FORMAT_MISMATCH: return "format_mismatch";
    case MOAN_ERR_MISSING_ARTIFACT: return "missing_artifact";
    case MOAN_ERR_RUNTIME: return "runtime_failure";
    case MOAN_ERR_NULL_ARGUMENT: return "null_argument";
  }
  return "unknown";
}

const char* moan_last_error(void) { return last_error.c_str(); }

void moan_set_log(moan_log_fn fn, void* user) {
  std::lock_guard<std::mutex> g(log_mu);
  log_fn = fn;
  log_user = user;
}

void moan_string_free(char* s) { std::free(s); }

moan_status moan_config_default(moan_config** out) {
  MOAN_NONNULL(out);
  *out = nullptr;
  return guarded([&] { *out = new moan_config{}; });
}

moan_status moan_config_load(const char* path, moan_config** out) {
  MOAN_NONNULL(path);
  MOAN_NONNULL(out);
  *out = nullptr;
  return guarded([&] { *out = new moan_config{moan::harness::load_config(path)}; });
}

moan_status moan_config_parse(const char* text, moan_config** out) {
  MOAN_NONNULL(text);
  MOAN_NONNULL(out);
  *out = nullptr;
  return guarded([&] { *out = new moan_config{moan::harness::parse_config(text)}; });
}

void moan_config_free(moan_config* cfg) { delete cfg; }

moan_status moan_config_set(moan_config* cfg, const char* key, const char* value) {
  MOAN_NONNULL(cfg);
  MOAN_NONNULL(key);
  MOAN_NONNULL(value);
  return guarded([&] { moan::harness::set_config_value(cfg->cfg, key, value); });
}

moan_status moan_config_get(const moan_config* cfg, const char* key, char** value) {
  MOAN_NONNULL(cfg);
  MOAN_NONNULL(key);
  MOAN_NONNULL(value);
  return guarded([&] { *value = dup_string(moan::harness::get_config_value(cfg->cfg, key)); });
}

moan_status moan_config_validate(const moan_config* cfg) {
  MOAN_NONNULL(cfg);
  return guarded([&] { cfg->cfg.validate(); });
}

moan_status moan_config_dump(const moan_config* cfg, char** text) {
  MOAN_NONNULL(cfg);
  MOAN_NONNULL(text);
  return guarded([&] { *text = dup_string(moan::harness::dump_config(cfg->cfg)); });
}

moan_status moan_config_hash(const moan_config* cfg, char** hash) {
  MOAN_NONNULL(cfg);
  MOAN_NONNULL(hash);
  return guarded([&] { *hash = dup_string(moan::harness::config_hash(cfg->cfg)); });
}

moan_status moan_config_reference(char** text) {
  MOAN_NONNULL(text);
  return guarded([&] { *text = dup_string(moan::harness::config_reference()); });
}

moan_status moan_gen_data(const moan_config* cfg, int train_behavior, char** path) {
  MOAN_NONNULL(cfg);
  return guarded([&] {
    cfg->cfg.validate();
    bool reused = false;
    moan::harness::obtain_dataset(cfg->cfg, train_behavior != 0, logger(), &reused);
    const std::string file = moan::harness::dataset_file(cfg->cfg).string();
    emit((reused ? "dataset already present: " : "dataset written: ") + file);
    put_string(path, file);
  });
}

moan_status moan_train_model(const moan_config* cfg, char** run_dir) {
  MOAN_NONNULL(cfg);
  return guarded([&] {
    const auto r = moan::harness::run(cfg->cfg, moan::harness::RunStages::model_only, logger());
    put_string(run_dir, r.dir.string());
  });
}

moan_status moan_train_policy(const moan_config* cfg, double* final_return, char** run_dir) {
  MOAN_NONNULL(cfg);
  return guarded([&] {
    const auto r = moan::harness::run(cfg->cfg, moan::harness::RunStages::policy_only, logger());
    if (final_return != nullptr) *final_return = r.manifest.final_return;
    put_string(run_dir, r.dir.string());
  });
}

moan_status moan_run(const moan_config* cfg, double* final_return, double* behavior_return, char** run_dir) {
  MOAN_NONNULL(cfg);
  return guarded([&] {
    const auto r = moan::harness::run(cfg->cfg, moan::harness::RunStages::both, logger());
    if (final_return != nullptr) *final_return = r.manifest.final_return;
    if (behavior_return != nullptr) *behavior_return = r.manifest.behavior_return;
    put_string(run_dir, r.dir.string());
  });
}

moan_status moan_eval(const moan_config* cfg, const char* agent_checkpoint, int episodes, uint64_t seed, double* mean,
                      double* stdev) {
  MOAN_NONNULL(cfg);
  MOAN_NONNULL(agent_checkpoint);
  return guarded([&] {
    moan::require(episodes >= 1, moan::ErrorCode::invalid_argument, "episodes must be >= 1");
    const auto r = moan::harness::evaluate_checkpoint(cfg->cfg, agent_checkpoint, episodes, seed);
    if (mean != nullptr) *mean = r.mean;
    if (stdev != nullptr) *stdev = r.std;
  });
}

moan_status moan_verify_run(const char* run_dir, int* valid, char** why) {
  MOAN_NONNULL(run_dir);
  MOAN_NONNULL(valid);
  return guarded([&] {
    std::string reason;
    *valid = moan::harness::verify_manifest(run_dir, &reason) ? 1 : 0;
    put_string(why, reason);
  });
}

moan_status moan_sweep(const moan_config* cfg, const char* param, const double* values, size_t n_values,
                       const uint64_t* seeds, size_t n_seeds, const char* sweep_dir, int threads,
                       char** summary_csv) {
  MOAN_NONNULL(cfg);
  MOAN_NONNULL(param);
  MOAN_NONNULL(values);
  MOAN_NONNULL(seeds);
  MOAN_NONNULL(sweep_dir);
  return guarded([&] {
    const auto r = moan::harness::ablation_sweep(cfg->cfg, param, std::vector<double>(values, values + n_values),
                                                 std::vector<std::uint64_t>(seeds, seeds + n_seeds), sweep_dir,
                                                 threads, logger());
    put_string(summary_csv, r.summary_csv.string());
  });
}

moan_status moan_bound_check(uint64_t seed, int trials, const char* out_csv, moan_bound_summary* out) {
  MOAN_NONNULL(out);
  return guarded([&] {
    const auto s = moan::harness::bound_check(seed, trials, out_csv == nullptr ? std::filesystem::path() : out_csv);
    *out = {s.trials, s.literal_hold_rate, s.c_star_max, s.c_star_median, s.value_gap_max_error,
            s.all_c_star_finite ? 1 : 0};
  });
}

moan_status moan_gradcheck(uint64_t seed, int nets, moan_gradcheck_summary* out) {
  MOAN_NONNULL(out);
  return guarded([&] {
    const auto s = moan::harness::gradcheck(seed, nets);
    *out = {s.disc, s.gen_alpha0, s.gen_alpha1, s.critic, s.actor, s.temperature, s.max()};
  });
}

moan_status moan_dataset_create(const char* env_id, int d_s, int d_a, moan_dataset** out) {
  MOAN_NONNULL(env_id);
  MOAN_NONNULL(out);
  *out = nullptr;
  return guarded([&] {
    moan::require(d_s >= 1 && d_a >= 1, moan::ErrorCode::invalid_argument, "dataset dimensions must be >= 1");
    *out = new moan_dataset{moan::data::TransitionDataset(env_id, d_s, d_a)};
  });
}

moan_status moan_dataset_load(const char* path, moan_dataset** out) {
  MOAN_NONNULL(path);
  MOAN_NONNULL(out);
  *out = nullptr;
  return guarded([&] { *out = new moan_dataset{moan::data::load_dataset(path)}; });
}

void moan_dataset_free(moan_dataset* ds) { delete ds; }

moan_status moan_dataset_info_get(const moan_dataset* ds, moan_dataset_info* out) {
  MOAN_NONNULL(ds);
  MOAN_NONNULL(out);
  return guarded([&] {
    *out = {ds->ds.size(), ds->ds.d_s(), ds->ds.d_a(), ds->ds.header.reward_mean, ds->ds.header.reward_std};
  });
}

moan_status moan_dataset_env_id(const moan_dataset* ds, char** env_id) {
  MOAN_NONNULL(ds);
  MOAN_NONNULL(env_id);
  return guarded([&] { *env_id = dup_string(ds->ds.header.env_id); });
}

moan_status moan_dataset_push(moan_dataset* ds, const double* s, const double* a, const double* s_next, double r,
                              int done) {
  MOAN_NONNULL(ds);
  MOAN_NONNULL(s);
  MOAN_NONNULL(a);
  MOAN_NONNULL(s_next);
  return guarded([&] {
    const auto n_s = static_cast<std::size_t>(ds->ds.d_s());
    const auto n_a = static_cast<std::size_t>(ds->ds.d_a());
    ds->ds.push({s, n_s}, {a, n_a}, {s_next, n_s}, r, done != 0);
  });
}

moan_status moan_dataset_record(const moan_dataset* ds, size_t i, float* s, float* a, float* s_next, float* r,
                                int* done) {
  MOAN_NONNULL(ds);
  return guarded([&] {
    moan::require(i < ds->ds.size(), moan::ErrorCode::invalid_argument,
                  "record " + std::to_string(i) + " out of range (size " + std::to_string(ds->ds.size()) + ")");
    const auto st = ds->ds.state(i);
    const auto ac = ds->ds.action(i);
    const auto sn = ds->ds.next_state(i);
    if (s != nullptr) std::copy(st.begin(), st.end(), s);
    if (a != nullptr) std::copy(ac.begin(), ac.end(), a);
    if (s_next != nullptr) std::copy(sn.begin(), sn.end(), s_next);
    if (r != nullptr) *r = ds->ds.reward(i);
    if (done != nullptr) *done = ds->ds.done(i) ? 1 : 0;
  });
}

moan_status moan_dataset_save(moan_dataset* ds, const char* path) {
  MOAN_NONNULL(ds);
  MOAN_NONNULL(path);
  return guarded([&] {
    ds->ds.finalize_stats();
    moan::data::save_dataset(ds->ds, path);
  });
}

}  // extern "C"
