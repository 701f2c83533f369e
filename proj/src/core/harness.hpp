#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "adversarial.hpp"
#include "behavior.hpp"
#include "config.hpp"
#include "json.hpp"
#include "sac.hpp"

namespace moan::harness {

namespace fs = std::filesystem;
using Logger = std::function<void(const std::string&)>;

inline constexpr const char* kManifestMagic = "MOAN-MANIFEST";
inline constexpr int kManifestVersion = 1;

std::string code_version();

// run.out_dir, else $MOAN_OUT_DIR, else ./runs
fs::path output_root(const ExperimentConfig& cfg);
fs::path run_directory(const ExperimentConfig& cfg);
fs::path cache_directory(const ExperimentConfig& cfg);
fs::path behavior_directory(const ExperimentConfig& cfg);
fs::path dataset_file(const ExperimentConfig& cfg);
fs::path model_file(const ExperimentConfig& cfg);

// Exclusive ownership of a directory for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

struct Artifact {
  std::string path;  // relative to the run directory when inside it
  std::uint32_t crc32 = 0;
  std::uintmax_t bytes = 0;
  bool valid = true;
};

struct RunManifest {
  std::string run_id;
  std::string config_hash;
  std::string code_version;
  std::uint64_t dataset_seed = 0;
  std::uint64_t run_seed = 0;
  std::string started;
  std::string finished;
  std::string status;  // running | complete | failed
  nlohmann::ordered_json stages = nlohmann::ordered_json::object();
  std::vector<Artifact> artifacts;
  double final_return = 0.0;
  double behavior_return = 0.0;
  std::string error;
};

nlohmann::ordered_json manifest_json(const RunManifest& m);
void write_manifest(const fs::path& run_dir, const RunManifest& m);
RunManifest read_manifest(const fs::path& run_dir);
// True when every listed artifact exists with the recorded size and checksum.
bool verify_manifest(const fs::path& run_dir, std::string* why = nullptr);

// ---- stages -------------------------------------------------------------------

behavior::BehaviorBundle obtain_behavior(const ExperimentConfig& cfg, bool train_if_missing, const Logger& log = {});
data::TransitionDataset obtain_dataset(const ExperimentConfig& cfg, bool train_behavior_if_missing,
                                       const Logger& log = {}, bool* reused = nullptr);
model::TrainedModel obtain_model(const ExperimentConfig& cfg, const data::TransitionDataset& dataset,
                                 const Logger& log = {}, bool* reused = nullptr);

// Mean evaluation return over the last `window` epochs.
double final_return(const sac::PolicyTrainReport& report, int window);

struct RunResult {
  fs::path dir;
  RunManifest manifest;
  model::ModelTrainReport model_report;
  sac::PolicyTrainReport policy_report;
};

enum class RunStages { model_only, policy_only, both };

// Stage 1 is reused when a model checkpoint with the same model hash exists.
// policy_only requires it to exist.
RunResult run(const ExperimentConfig& cfg, RunStages stages = RunStages::both, const Logger& log = {});

struct SweepRow {
  std::string param;
  double value = 0.0;
  std::uint64_t seed = 0;
  double final_return = 0.0;
  double behavior_return = 0.0;
  std::string run_dir;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  fs::path summary_csv;
};

// One run per (value, seed); runs share the dataset and, where the model hash
// agrees, the stage-1 model through run.cache_dir (<sweep_dir>/cache when unset).
SweepResult ablation_sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<double>& values,
                           const std::vector<std::uint64_t>& seeds, const fs::path& sweep_dir, int threads = 1,
                           const Logger& log = {});

// ---- metrics ------------------------------------------------------------------

std::string model_metrics_csv(const std::string& run_id, const model::ModelTrainReport& r);
std::string policy_metrics_csv(const std::string& run_id, const sac::PolicyTrainReport& r);
std::string penalty_csv(const std::vector<penalty::PenaltyBreakdown>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// ---- checks exposed through the CLI ---------------------------------------------

struct BoundCheckSummary {
  int trials = 0;
  double literal_hold_rate = 0.0;
  double c_star_max = 0.0;
  double c_star_median = 0.0;
  double value_gap_max_error = 0.0;
  bool all_c_star_finite = true;
};

// Random tabular tuples (|S| = 5, |A| = 3, gamma = 0.9, delta = 1); writes one
// CSV row per trial when out_csv is non-empty.
BoundCheckSummary bound_check(std::uint64_t seed, int trials, const fs::path& out_csv = {});

struct GradCheckSummary {
  double disc = 0.0;
  double gen_alpha0 = 0.0;
  double gen_alpha1 = 0.0;
  double critic = 0.0;
  double actor = 0.0;
  double temperature = 0.0;
  double max() const;
};

// Central-difference checks of every training loss on small random 64-bit nets.
GradCheckSummary gradcheck(std::uint64_t seed, int nets);

sac::EvalResult evaluate_checkpoint(const ExperimentConfig& cfg, const fs::path& agent_ckpt, int episodes,
                                    std::uint64_t seed);

}  // namespace moan::harness
