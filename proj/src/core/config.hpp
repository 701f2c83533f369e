#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adversarial.hpp"
#include "dataset.hpp"
#include "env.hpp"
#include "penalty.hpp"
#include "sac.hpp"

namespace moan::harness {

struct DatasetBlock {
  data::BehaviorTag tag = data::BehaviorTag::medium;
  std::size_t size = 20000;
  std::uint64_t seed = 0;
  std::string path;          // existing dataset file; generated when empty
  std::string behavior_dir;  // behavior checkpoint directory; <cache>/behavior-<hash> when empty
};

// Online SAC run that produces the medium / expert behavior policies.
struct BehaviorBlock {
  int total_steps = 30000;
  int warmup_steps = 1000;
  int eval_every = 1000;
  int eval_episodes = 5;
  std::uint64_t seed = 0;
};

struct RunBlock {
  std::uint64_t seed = 0;  // seeds model and policy training
  std::string out_dir;     // run directory root; MOAN_OUT_DIR or ./runs when empty
  std::string run_id = "run";
  std::string cache_dir;   // shared dataset / model cache; the run directory when empty
  int final_window = 5;    // final return = mean eval return over the last epochs
};

struct ExperimentConfig {
  env::EnvKind env = env::EnvKind::pointmass2d;
  DatasetBlock dataset;
  BehaviorBlock behavior;
  model::ModelTrainConfig model;
  penalty::PenaltyConfig penalty;
  sac::PolicyTrainConfig policy;
  RunBlock run;

  ExperimentConfig();

  // Copies with the run seed folded into the stage configs.
  model::ModelTrainConfig model_config() const;
  sac::PolicyTrainConfig policy_config() const;
  sac::PolicyTrainConfig behavior_policy_config() const;
  sac::OnlineConfig online_config() const;

  void validate() const;
};

// Grammar: lines of `[section]`, `key = value`, blank, or `# comment`. Values
// are numbers, true/false, bare strings, or comma-separated integer lists.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& cfg);
// "section.key" = value; same validation as the file parser.
void set_config_value(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& dotted_key);
// Markdown table of every key with its default and meaning.
std::string config_reference();

std::string dataset_hash(const ExperimentConfig& cfg);
std::string behavior_hash(const ExperimentConfig& cfg);
std::string model_hash(const ExperimentConfig& cfg);
std::string policy_hash(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace moan::harness
