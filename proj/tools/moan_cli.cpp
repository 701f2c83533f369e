// moan command-line front end. Talks to the library only through moan.h.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "moan.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RuntimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigDeleter {
  void operator()(moan_config* c) const { moan_config_free(c); }
};
using ConfigPtr = std::unique_ptr<moan_config, ConfigDeleter>;

// Owns a string handed out by the library.
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { moan_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

void check(moan_status st, bool usage = false) {
  if (st == MOAN_OK) return;
  const std::string msg = std::string(moan_status_name(st)) + ": " + moan_last_error();
  if (usage) throw UsageError(msg);
  throw RuntimeError(msg);
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  std::vector<std::string> sets;
  bool quiet = false;
};

ConfigPtr build_config(const Globals& g) {
  moan_config* raw = nullptr;
  if (g.config.empty()) {
    check(moan_config_default(&raw), true);
  } else {
    check(moan_config_load(g.config.c_str(), &raw), true);
  }
  ConfigPtr cfg(raw);
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + kv + "'");
    check(moan_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), true);
  }
  if (g.seed) check(moan_config_set(cfg.get(), "run.seed", std::to_string(*g.seed).c_str()), true);
  if (!g.out.empty()) check(moan_config_set(cfg.get(), "run.out_dir", g.out.c_str()), true);
  return cfg;
}

std::string output_root(const Globals& g) {
  if (!g.out.empty()) return g.out;
  if (const char* env_dir = std::getenv("MOAN_OUT_DIR"); env_dir != nullptr && *env_dir != '\0') return env_dir;
  return "runs";
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, double>) {
        out.push_back(std::stod(item, &used));
      } else {
        if (!item.empty() && item[0] == '-') throw std::invalid_argument("negative");
        out.push_back(std::stoull(item, &used));
      }
      if (used != item.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw UsageError(std::string("bad ") + what + " entry '" + item + "'");
    }
    start = end + 1;
  }
  return out;
}

void log_to_stderr(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moan: adversarial-model offline RL with a discriminator reward penalty"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(moan_version()));

  Globals g;
  app.add_option("--config", g.config, "Experiment config file (key = value sections)");
  app.add_option("--seed", g.seed, "Run seed (overrides run.seed)");
  app.add_option("--out", g.out, "Output root (overrides run.out_dir and MOAN_OUT_DIR)");
  app.add_option("--threads", g.threads, "Parallel runs for sweep")->check(CLI::PositiveNumber);
  app.add_option("--set", g.sets, "Override a config value: section.key=value (repeatable)");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress lines on stderr");

  auto* gen = app.add_subcommand("gen-data", "Generate (or reuse) the configured offline dataset");
  bool train_behavior = false;
  gen->add_flag("--train-behavior", train_behavior, "Train missing medium/expert behavior policies online");

  auto* train_model = app.add_subcommand("train-model", "Stage 1: adversarial dynamics ensemble and discriminator");
  auto* train_policy = app.add_subcommand("train-policy", "Stage 2: SAC on penalized rollouts (needs the stage-1 model)");
  auto* run = app.add_subcommand("run", "Both stages; a cached stage-1 model is reused");

  auto* eval = app.add_subcommand("eval", "Evaluate an agent checkpoint in the true environment");
  std::string checkpoint;
  int episodes = 10;
  std::uint64_t eval_seed = 12345;
  eval->add_option("checkpoint", checkpoint, "agent.ckpt path")->required();
  eval->add_option("--episodes", episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  eval->add_option("--eval-seed", eval_seed, "Seed of the evaluation episodes");

  auto* bound = app.add_subcommand("bound-check", "Tabular lower-bound report over random MDP tuples");
  int trials = 500;
  std::string bound_csv;
  bound->add_option("--trials", trials, "Random tuples")->check(CLI::PositiveNumber);
  bound->add_option("--csv", bound_csv, "Per-trial CSV (default <out>/bound_check.csv)");

  auto* sweep = app.add_subcommand("sweep", "Grid over alpha or eta with several seeds");
  std::string param;
  std::string values_text;
  std::string seeds_text = "0,1,2,3,4";
  std::string sweep_dir;
  sweep->add_option("--param", param, "alpha or eta")->required()->check(CLI::IsMember({"alpha", "eta"}));
  sweep->add_option("--values", values_text, "Comma-separated values")->required();
  sweep->add_option("--seeds", seeds_text, "Comma-separated run seeds");
  sweep->add_option("--dir", sweep_dir, "Sweep directory (default <out>/sweep-<param>)");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every training loss");
  int nets = 20;
  double tolerance = 1e-4;
  grad->add_option("--nets", nets, "Random networks per loss")->check(CLI::PositiveNumber);
  grad->add_option("--tolerance", tolerance, "Maximum accepted relative error");

  auto* verify = app.add_subcommand("verify", "Check a run manifest against its artifacts");
  std::string verify_dir;
  verify->add_option("run_dir", verify_dir, "Run directory")->required();

  auto* show = app.add_subcommand("config", "Print the effective config, or the key reference with --reference");
  bool reference = false;
  show->add_flag("--reference", reference, "Markdown table of every key and default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (!g.quiet) moan_set_log(log_to_stderr, nullptr);

  try {
    if (*show) {
      OwnedString text;
      if (reference) {
        check(moan_config_reference(&text.p));
      } else {
        auto cfg = build_config(g);
        check(moan_config_dump(cfg.get(), &text.p));
      }
      std::cout << text.str();
      return kExitOk;
    }
    if (*bound) {
      moan_bound_summary s{};
      const std::string csv = bound_csv.empty() ? output_root(g) + "/bound_check.csv" : bound_csv;
      const std::uint64_t seed = g.seed.value_or(0);
      check(moan_bound_check(seed, trials, csv.c_str(), &s));
      std::printf("trials %d\nliteral_hold_rate %.6f\nc_star_median %.6g\nc_star_max %.6g\nc_star_all_finite %d\n"
                  "value_gap_max_error %.3g\ncsv %s\n",
                  s.trials, s.literal_hold_rate, s.c_star_median, s.c_star_max, s.all_c_star_finite,
                  s.value_gap_max_error, csv.c_str());
      return s.all_c_star_finite ? kExitOk : kExitRuntime;
    }
    if (*grad) {
      moan_gradcheck_summary s{};
      check(moan_gradcheck(g.seed.value_or(0), nets, &s));
      std::printf("disc %.3g\ngen_alpha0 %.3g\ngen_alpha1 %.3g\ncritic %.3g\nactor %.3g\ntemperature %.3g\nmax %.3g\n",
                  s.disc, s.gen_alpha0, s.gen_alpha1, s.critic, s.actor, s.temperature, s.max);
      if (s.max > tolerance) {
        std::fprintf(stderr, "gradcheck: max relative error %.3g exceeds %.3g\n", s.max, tolerance);
        return kExitRuntime;
      }
      return kExitOk;
    }
    if (*verify) {
      int valid = 0;
      OwnedString why;
      check(moan_verify_run(verify_dir.c_str(), &valid, &why.p));
      if (valid) {
        std::printf("ok %s\n", verify_dir.c_str());
        return kExitOk;
      }
      std::fprintf(stderr, "invalid run %s: %s\n", verify_dir.c_str(), why.str().c_str());
      return kExitRuntime;
    }

    auto cfg = build_config(g);
    check(moan_config_validate(cfg.get()), true);

    if (*gen) {
      OwnedString path;
      check(moan_gen_data(cfg.get(), train_behavior ? 1 : 0, &path.p));
      std::printf("%s\n", path.str().c_str());
    } else if (*train_model) {
      OwnedString dir;
      check(moan_train_model(cfg.get(), &dir.p));
      std::printf("run_dir %s\n", dir.str().c_str());
    } else if (*train_policy) {
      OwnedString dir;
      double ret = 0.0;
      check(moan_train_policy(cfg.get(), &ret, &dir.p));
      std::printf("final_return %.6f\nrun_dir %s\n", ret, dir.str().c_str());
    } else if (*run) {
      OwnedString dir;
      double ret = 0.0, behavior = 0.0;
      check(moan_run(cfg.get(), &ret, &behavior, &dir.p));
      std::printf("final_return %.6f\nbehavior_return %.6f\nrun_dir %s\n", ret, behavior, dir.str().c_str());
    } else if (*eval) {
      double mean = 0.0, stdev = 0.0;
      check(moan_eval(cfg.get(), checkpoint.c_str(), episodes, eval_seed, &mean, &stdev));
      std::printf("return_mean %.6f\nreturn_std %.6f\nepisodes %d\n", mean, stdev, episodes);
    } else if (*sweep) {
      const auto values = parse_list<double>(values_text, "--values");
      const auto seeds = parse_list<std::uint64_t>(seeds_text, "--seeds");
      const std::string dir = sweep_dir.empty() ? output_root(g) + "/sweep-" + param : sweep_dir;
      OwnedString summary;
      check(moan_sweep(cfg.get(), param.c_str(), values.data(), values.size(), seeds.data(), seeds.size(),
                       dir.c_str(), g.threads, &summary.p));
      std::printf("summary %s\n", summary.str().c_str());
    }
    return kExitOk;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "moan: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "moan: %s\n", e.what());
    return kExitRuntime;
  }
}
