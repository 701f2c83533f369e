#include <sstream>
#include <string>

#include "config.hpp"
#include "doctest.h"
#include "error.hpp"

using namespace moan;
using namespace moan::harness;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ok;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("an empty file yields the defaults") {
  const ExperimentConfig defaults;
  CHECK(dump_config(parse_config("")) == dump_config(defaults));
  CHECK(dump_config(parse_config("# only a comment\n\n")) == dump_config(defaults));
  CHECK(defaults.model.alpha == 0.1);
  CHECK(defaults.penalty.eta == 1.0);
  CHECK(defaults.penalty.mode == penalty::PenaltyMode::discrepancy);
}

TEST_CASE("dump and parse are inverse") {
  ExperimentConfig cfg;
  set_config_value(cfg, "model.alpha", "0.37");
  set_config_value(cfg, "model.hidden", "12,34");
  set_config_value(cfg, "penalty.mode", "literal");
  set_config_value(cfg, "dataset.tag", "random");
  set_config_value(cfg, "run.run_id", "abc");
  const std::string text = dump_config(cfg);
  CHECK(dump_config(parse_config(text)) == text);
  const auto back = parse_config(text);
  CHECK(back.model.alpha == 0.37);
  CHECK(back.model.hidden == std::vector<int>{12, 34});
  CHECK(get_config_value(back, "penalty.mode") == "literal");
  CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("parse errors carry line and column") {
  const std::string text = "[model]\nalpha = 0.2\nbatch_size = many\n";
  CHECK(code_of([&] { parse_config(text, "exp.ini"); }) == ErrorCode::parse_error);
  CHECK(message_of([&] { parse_config(text, "exp.ini"); }).rfind("exp.ini:3:14:", 0) == 0);
  CHECK(message_of([] { parse_config("[model\n"); }).find(":1:1:") != std::string::npos);
  CHECK(code_of([] { parse_config("[nosuch]\n"); }) == ErrorCode::parse_error);
  CHECK(code_of([] { parse_config("alpha = 1\n"); }) == ErrorCode::parse_error);
  CHECK(message_of([] { parse_config("[model]\nbogus = 1\n"); }).find("unknown key 'model.bogus'") != std::string::npos);
}

TEST_CASE("out-of-range values are rejected") {
  CHECK(code_of([] { parse_config("[model]\nalpha = -1\n"); }) != ErrorCode::ok);
  CHECK(code_of([] { parse_config("[penalty]\neta = -0.5\n"); }) != ErrorCode::ok);
  CHECK(code_of([] { parse_config("[model]\nholdout_fraction = 0.9\n"); }) != ErrorCode::ok);
  CHECK(code_of([] { parse_config("[policy]\nreal_fraction = 2\n"); }) != ErrorCode::ok);
  CHECK(code_of([] { parse_config("[dataset]\npath = /definitely/not/here.bin\n"); }) == ErrorCode::missing_artifact);
  ExperimentConfig cfg;
  CHECK(code_of([&] { set_config_value(cfg, "model.nope", "1"); }) != ErrorCode::ok);
  CHECK(code_of([&] { set_config_value(cfg, "model.alpha", "abc"); }) != ErrorCode::ok);
}

TEST_CASE("stage hashes change only with the settings they depend on") {
  const ExperimentConfig base;
  auto with = [&](const char* key, const char* value) {
    ExperimentConfig c = base;
    set_config_value(c, key, value);
    return c;
  };
  const auto policy_change = with("policy.batch_size", "64");
  CHECK(behavior_hash(policy_change) == behavior_hash(base));
  CHECK(dataset_hash(policy_change) == dataset_hash(base));
  CHECK(model_hash(policy_change) == model_hash(base));
  CHECK(policy_hash(policy_change) != policy_hash(base));

  const auto alpha_change = with("model.alpha", "0.5");
  CHECK(dataset_hash(alpha_change) == dataset_hash(base));
  CHECK(model_hash(alpha_change) != model_hash(base));

  const auto eta_change = with("penalty.eta", "0");
  CHECK(model_hash(eta_change) == model_hash(base));
  CHECK(policy_hash(eta_change) != policy_hash(base));

  const auto seed_change = with("run.seed", "3");
  CHECK(dataset_hash(seed_change) == dataset_hash(base));
  CHECK(model_hash(seed_change) != model_hash(base));

  const auto data_change = with("dataset.size", "1234");
  CHECK(dataset_hash(data_change) != dataset_hash(base));
  CHECK(behavior_hash(data_change) == behavior_hash(base));

  const auto out_change = with("run.out_dir", "/tmp/elsewhere");
  CHECK(model_hash(out_change) == model_hash(base));
}

TEST_CASE("the run seed is folded into the stage configs") {
  ExperimentConfig cfg;
  cfg.run.seed = 42;
  CHECK(cfg.model_config().seed != cfg.policy_config().seed);
  ExperimentConfig other = cfg;
  other.run.seed = 43;
  CHECK(cfg.model_config().seed != other.model_config().seed);
  // The behavior policy ignores the offline policy settings.
  other.policy.batch_size = 7;
  CHECK(other.behavior_policy_config().batch_size == cfg.behavior_policy_config().batch_size);
}

TEST_CASE("the reference documents every key") {
  const std::string ref = config_reference();
  std::istringstream dump(dump_config(ExperimentConfig{}));
  std::string line, section;
  int keys = 0;
  while (std::getline(dump, line)) {
    if (line.empty()) continue;
    if (line[0] == '[') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const std::string key = line.substr(0, line.find(' '));
    CHECK_MESSAGE(ref.find("`" + section + "." + key + "`") != std::string::npos, std::string(section + "." + key));
    ++keys;
  }
  CHECK(keys > 30);
}
