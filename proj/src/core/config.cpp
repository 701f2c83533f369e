#include "config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>
#include <type_traits>

#include "error.hpp"
#include "io.hpp"

namespace moan::harness {

namespace {

struct Field {
  const char* section;
  const char* key;
  const char* doc;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) fail(ErrorCode::parse_error, "expected a number, got '" + s + "'");
  return v;
}

long long parse_int(const std::string& s) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) fail(ErrorCode::parse_error, "expected an integer, got '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    fail(ErrorCode::parse_error, "expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  fail(ErrorCode::parse_error, "expected true or false, got '" + s + "'");
}

std::vector<int> parse_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) fail(ErrorCode::parse_error, "empty entry in list '" + s + "'");
    out.push_back(static_cast<int>(parse_int(item.substr(b, e - b + 1))));
  }
  if (out.empty()) fail(ErrorCode::parse_error, "expected a comma-separated integer list");
  return out;
}

#define MOAN_F_DOUBLE(sec, k, member, doc)                                                    \
  Field {                                                                                     \
    sec, k, doc, [](const ExperimentConfig& c) { return fmt_double(c.member); },              \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_double(v); }         \
  }
#define MOAN_F_INT(sec, k, member, doc)                                                        \
  Field {                                                                                      \
    sec, k, doc, [](const ExperimentConfig& c) { return std::to_string(c.member); },           \
        [](ExperimentConfig& c, const std::string& v) {                                        \
          const long long x = parse_int(v);                                                    \
          if (std::is_unsigned_v<decltype(c.member)> && x < 0) {                               \
            fail(ErrorCode::parse_error, "expected a non-negative integer, got '" + v + "'");  \
          }                                                                                    \
          c.member = static_cast<decltype(c.member)>(x);                                       \
        }                                                                                      \
  }
#define MOAN_F_U64(sec, k, member, doc)                                                        \
  Field {                                                                                      \
    sec, k, doc, [](const ExperimentConfig& c) { return std::to_string(c.member); },           \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_u64(v); }             \
  }
#define MOAN_F_BOOL(sec, k, member, doc)                                                       \
  Field {                                                                                      \
    sec, k, doc, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }, \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(v); }            \
  }
#define MOAN_F_STR(sec, k, member, doc)                                                        \
  Field {                                                                                      \
    sec, k, doc, [](const ExperimentConfig& c) { return c.member; },                           \
        [](ExperimentConfig& c, const std::string& v) { c.member = v; }                        \
  }
#define MOAN_F_LIST(sec, k, member, doc)                                                       \
  Field {                                                                                      \
    sec, k, doc, [](const ExperimentConfig& c) { return fmt_list(c.member); },                 \
        [](ExperimentConfig& c, const std::string& v) { c.member = parse_list(v); }            \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"env", "kind", "pointmass2d or pendulum1d",
            [](const ExperimentConfig& c) { return env::to_string(c.env); },
            [](ExperimentConfig& c, const std::string& v) { c.env = env::env_kind_from_string(v); }},

      Field{"dataset", "tag", "random, medium, medium-replay or medium-expert",
            [](const ExperimentConfig& c) { return data::to_string(c.dataset.tag); },
            [](ExperimentConfig& c, const std::string& v) { c.dataset.tag = data::behavior_tag_from_string(v); }},
      MOAN_F_INT("dataset", "size", dataset.size, "number of transitions"),
      MOAN_F_U64("dataset", "seed", dataset.seed, "dataset generation seed"),
      MOAN_F_STR("dataset", "path", dataset.path, "existing dataset file; empty generates one"),
      MOAN_F_STR("dataset", "behavior_dir", dataset.behavior_dir,
                 "behavior checkpoint directory; empty means <cache>/behavior-<hash>"),

      MOAN_F_INT("behavior", "total_steps", behavior.total_steps, "online SAC env steps"),
      MOAN_F_INT("behavior", "warmup_steps", behavior.warmup_steps, "uniform-action steps before updates"),
      MOAN_F_INT("behavior", "eval_every", behavior.eval_every, "steps between snapshots"),
      MOAN_F_INT("behavior", "eval_episodes", behavior.eval_episodes, "episodes per snapshot evaluation"),
      MOAN_F_U64("behavior", "seed", behavior.seed, "online run seed"),

      MOAN_F_INT("model", "ensemble_size", model.ensemble_size, "ensemble members N"),
      MOAN_F_LIST("model", "hidden", model.hidden, "member hidden widths"),
      MOAN_F_LIST("model", "disc_hidden", model.disc_hidden, "discriminator hidden widths"),
      MOAN_F_DOUBLE("model", "alpha", model.alpha, "adversarial weight in the generator loss"),
      MOAN_F_DOUBLE("model", "lr_gen", model.lr_gen, "generator learning rate (beta)"),
      MOAN_F_DOUBLE("model", "lr_disc", model.lr_disc, "discriminator learning rate (omega)"),
      MOAN_F_INT("model", "batch_size", model.batch_size, "minibatch size"),
      MOAN_F_INT("model", "max_epochs", model.max_epochs, "epoch cap"),
      MOAN_F_DOUBLE("model", "holdout_fraction", model.holdout_fraction, "holdout share for early stopping"),
      MOAN_F_INT("model", "patience", model.patience, "epochs without holdout improvement before stopping"),
      MOAN_F_INT("model", "disc_steps_per_gen_step", model.disc_steps_per_gen_step,
                 "discriminator steps per generator step"),
      MOAN_F_BOOL("model", "non_saturating", model.non_saturating,
                  "use -log D instead of log(1 - D) in the generator loss"),
      MOAN_F_BOOL("model", "literal_signs", model.literal_signs,
                  "ascend the generator loss as printed (diverges; kept for comparison)"),

      MOAN_F_DOUBLE("penalty", "eta", penalty.eta, "penalty weight; applied to raw rewards, penalty in normalized units"),
      Field{"penalty", "mode", "discrepancy (u = 1 - D) or literal (u = D)",
            [](const ExperimentConfig& c) { return penalty::to_string(c.penalty.mode); },
            [](ExperimentConfig& c, const std::string& v) { c.penalty.mode = penalty::mode_from_string(v); }},
      Field{"penalty", "sigma_agg", "max_member_std_norm, chosen_member_std_norm or mean_member_std_norm",
            [](const ExperimentConfig& c) { return penalty::to_string(c.penalty.sigma_agg); },
            [](ExperimentConfig& c, const std::string& v) { c.penalty.sigma_agg = penalty::sigma_agg_from_string(v); }},
      MOAN_F_INT("penalty", "disc_samples", penalty.disc_samples, "model samples averaged into u"),

      MOAN_F_DOUBLE("policy", "gamma", policy.gamma, "discount"),
      MOAN_F_DOUBLE("policy", "tau", policy.tau, "target smoothing"),
      MOAN_F_DOUBLE("policy", "lr_actor", policy.lr_actor, "actor learning rate"),
      MOAN_F_DOUBLE("policy", "lr_critic", policy.lr_critic, "critic learning rate"),
      MOAN_F_DOUBLE("policy", "lr_temperature", policy.lr_temperature, "temperature learning rate"),
      MOAN_F_INT("policy", "batch_size", policy.batch_size, "SAC minibatch size"),
      MOAN_F_DOUBLE("policy", "real_fraction", policy.real_fraction, "share of each batch drawn from the dataset"),
      MOAN_F_INT("policy", "rollout_horizon", policy.rollout_horizon, "branch rollout length h"),
      MOAN_F_INT("policy", "rollouts_per_epoch", policy.rollouts_per_epoch, "branch start states per epoch"),
      MOAN_F_INT("policy", "epochs", policy.epochs, "policy epochs m"),
      MOAN_F_INT("policy", "updates_per_epoch", policy.updates_per_epoch, "SAC updates per epoch"),
      MOAN_F_LIST("policy", "hidden", policy.hidden, "actor and critic hidden widths"),
      MOAN_F_DOUBLE("policy", "init_temperature", policy.init_temperature, "initial entropy temperature"),
      MOAN_F_INT("policy", "eval_episodes", policy.eval_episodes, "evaluation episodes per epoch"),
      MOAN_F_INT("policy", "model_retention_epochs", policy.model_retention_epochs,
                 "epochs of rollouts kept in the model buffer"),

      MOAN_F_U64("run", "seed", run.seed, "seeds model and policy training"),
      MOAN_F_STR("run", "out_dir", run.out_dir, "output root; MOAN_OUT_DIR or ./runs when empty"),
      MOAN_F_STR("run", "run_id", run.run_id, "run directory name"),
      MOAN_F_STR("run", "cache_dir", run.cache_dir, "shared dataset/model cache; the run directory when empty"),
      MOAN_F_INT("run", "final_window", run.final_window, "epochs averaged into the final return"),
  };
  return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (section == f.section && key == f.key) return &f;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string section_dump(const ExperimentConfig& cfg, std::initializer_list<const char*> sections) {
  std::string out;
  for (const char* sec : sections) {
    for (const auto& f : fields()) {
      if (std::string(f.section) == sec) out += std::string(f.section) + "." + f.key + "=" + f.get(cfg) + "\n";
    }
  }
  return out;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  model.ensemble_size = 5;
  model.hidden = {128, 128};
  model.max_epochs = 20;
  policy.epochs = 30;
  policy.updates_per_epoch = 500;
  policy.lr_actor = 1e-3;
  policy.lr_critic = 1e-3;
  policy.lr_temperature = 1e-3;
  policy.init_temperature = 0.2;
}

model::ModelTrainConfig ExperimentConfig::model_config() const {
  model::ModelTrainConfig m = model;
  m.seed = derive_seed(run.seed, 0x30de1);
  return m;
}

sac::PolicyTrainConfig ExperimentConfig::policy_config() const {
  sac::PolicyTrainConfig p = policy;
  p.seed = derive_seed(run.seed, 0x9011c);
  return p;
}

sac::PolicyTrainConfig ExperimentConfig::behavior_policy_config() const {
  // Fixed online settings; the [policy] section only drives the offline stage.
  sac::PolicyTrainConfig p;
  p.lr_actor = p.lr_critic = p.lr_temperature = 1e-3;
  p.init_temperature = 0.2;
  p.seed = behavior.seed;
  return p;
}

sac::OnlineConfig ExperimentConfig::online_config() const {
  sac::OnlineConfig o;
  o.total_steps = behavior.total_steps;
  o.warmup_steps = behavior.warmup_steps;
  o.eval_every = behavior.eval_every;
  o.eval_episodes = behavior.eval_episodes;
  return o;
}

void ExperimentConfig::validate() const {
  require(dataset.size >= 1, ErrorCode::invalid_argument, "dataset.size must be >= 1");
  if (!dataset.path.empty()) {
    require(std::filesystem::exists(dataset.path), ErrorCode::missing_artifact,
            "dataset.path: file '" + dataset.path + "' does not exist");
  }
  if (!dataset.behavior_dir.empty() && dataset.tag != data::BehaviorTag::random && dataset.path.empty()) {
    require(std::filesystem::is_directory(dataset.behavior_dir), ErrorCode::missing_artifact,
            "dataset.behavior_dir: directory '" + dataset.behavior_dir + "' does not exist");
  }
  require(behavior.total_steps >= 1 && behavior.warmup_steps >= 0 && behavior.eval_every >= 1 &&
              behavior.eval_episodes >= 1,
          ErrorCode::invalid_argument, "behavior: steps and episode counts must be positive");
  model.validate();
  penalty.validate();
  policy.validate();
  require(!run.run_id.empty() && run.run_id.find('/') == std::string::npos, ErrorCode::invalid_argument,
          "run.run_id must be a non-empty name without '/'");
  require(run.final_window >= 1, ErrorCode::invalid_argument, "run.final_window must be >= 1");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  auto where = [&](std::size_t col) {
    return source + ":" + std::to_string(line_no) + ":" + std::to_string(col + 1) + ": ";
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = hash == std::string::npos ? line : line.substr(0, hash);
    const auto first = body.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    if (body[first] == '[') {
      const auto close = body.find(']', first);
      if (close == std::string::npos) fail(ErrorCode::parse_error, where(first) + "unterminated section header");
      if (!trim(body.substr(close + 1)).empty()) fail(ErrorCode::parse_error, where(close + 1) + "text after section header");
      section = trim(body.substr(first + 1, close - first - 1));
      bool known = false;
      for (const auto& f : fields()) known = known || section == f.section;
      if (!known) fail(ErrorCode::parse_error, where(first + 1) + "unknown section '" + section + "'");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail(ErrorCode::parse_error, where(first) + "expected `key = value`");
    if (section.empty()) fail(ErrorCode::parse_error, where(first) + "key outside of a [section]");
    const std::string key = trim(body.substr(0, eq));
    const Field* f = find_field(section, key);
    if (f == nullptr) fail(ErrorCode::parse_error, where(first) + "unknown key '" + section + "." + key + "'");
    const std::string value = trim(body.substr(eq + 1));
    const auto vcol = body.find_first_not_of(" \t", eq + 1);
    try {
      f->set(cfg, value);
    } catch (const Error& e) {
      fail(ErrorCode::parse_error, where(vcol == std::string::npos ? eq + 1 : vcol) + section + "." + key + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_text(path), path.string());
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

void set_config_value(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  require(dot != std::string::npos, ErrorCode::invalid_argument, "config key must look like section.key");
  const Field* f = find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  require(f != nullptr, ErrorCode::invalid_argument, "unknown config key '" + dotted_key + "'");
  try {
    f->set(cfg, trim(value));
  } catch (const Error& e) {
    fail(ErrorCode::invalid_argument, dotted_key + ": " + e.what());
  }
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& dotted_key) {
  const auto dot = dotted_key.find('.');
  require(dot != std::string::npos, ErrorCode::invalid_argument, "config key must look like section.key");
  const Field* f = find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  require(f != nullptr, ErrorCode::invalid_argument, "unknown config key '" + dotted_key + "'");
  return f->get(cfg);
}

std::string config_reference() {
  const ExperimentConfig defaults;
  std::string out =
      "# Configuration reference\n\n"
      "Generated by `moan config --reference`. Files use `[section]` headers and `key = value` lines; `#` starts a "
      "comment. An empty file gives the defaults below. Unknown keys are errors.\n\n"
      "The defaults are desk-scale values chosen for a single CPU core; they are not tuned per environment.\n"
      "The penalty is computed in normalized model units and subtracted from raw rewards, so `penalty.eta` also "
      "absorbs the reward scale.\n\n"
      "| key | default | meaning |\n|---|---|---|\n";
  for (const auto& f : fields()) {
    std::string def = f.get(defaults);
    if (def.empty()) def = "(empty)";
    out += "| `" + std::string(f.section) + "." + f.key + "` | `" + def + "` | " + f.doc + " |\n";
  }
  return out;
}

std::string behavior_hash(const ExperimentConfig& cfg) {
  return io::hash_hex("behavior|" + section_dump(cfg, {"env", "behavior"}));
}

std::string dataset_hash(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.dataset.behavior_dir.clear();
  std::string text = "dataset|" + section_dump(c, {"env", "dataset"});
  if (cfg.dataset.path.empty() && cfg.dataset.tag != data::BehaviorTag::random) text += behavior_hash(cfg);
  return io::hash_hex(text);
}

std::string model_hash(const ExperimentConfig& cfg) {
  return io::hash_hex("model|" + dataset_hash(cfg) + section_dump(cfg, {"model"}) + "seed=" +
                      std::to_string(cfg.run.seed));
}

std::string policy_hash(const ExperimentConfig& cfg) {
  return io::hash_hex("policy|" + model_hash(cfg) + section_dump(cfg, {"penalty", "policy"}));
}

std::string config_hash(const ExperimentConfig& cfg) { return io::hash_hex(dump_config(cfg)); }

}  // namespace moan::harness
