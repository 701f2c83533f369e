#include "behavior.hpp"

#include <algorithm>
#include <cmath>

#include "checkpoint.hpp"
#include "error.hpp"

namespace moan::behavior {

namespace {

constexpr const char* kBundleFile = "behavior.ckpt";
constexpr const char* kReplayFile = "replay.bin";

sac::SACAgent policy_only(const nn::NetSpec& spec, const std::vector<float>& params, const model::Normalizer& norm) {
  sac::SACAgent a;
  a.policy = nn::Network<float>(spec);
  a.policy.params() = params;
  a.state_norm = norm;
  return a;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

BehaviorBundle train_behavior(const env::ContinuousEnv& env, const sac::PolicyTrainConfig& cfg,
                              const sac::OnlineConfig& online) {
  sac::OnlineResult run = sac::train_online(env, cfg, online);
  require(!run.snapshots.empty(), ErrorCode::runtime_failure, "train_behavior: no evaluation snapshots were taken");
  std::size_t best = 0;
  for (std::size_t i = 1; i < run.snapshots.size(); ++i) {
    if (run.snapshots[i].eval_return > run.snapshots[best].eval_return) best = i;
  }
  const double target = run.snapshots[best].eval_return / 3.0;
  std::size_t medium = 0;
  for (std::size_t i = 1; i < run.snapshots.size(); ++i) {
    if (std::abs(run.snapshots[i].eval_return - target) < std::abs(run.snapshots[medium].eval_return - target)) {
      medium = i;
    }
  }
  BehaviorBundle b;
  b.env_id = env.id();
  const auto& spec = run.agent.policy.spec();
  b.medium = policy_only(spec, run.snapshots[medium].policy_params, run.agent.state_norm);
  b.expert = policy_only(spec, run.snapshots[best].policy_params, run.agent.state_norm);
  b.medium_return = run.snapshots[medium].eval_return;
  b.expert_return = run.snapshots[best].eval_return;
  b.medium_step = run.snapshots[medium].step;
  b.expert_step = run.snapshots[best].step;
  for (std::size_t i = 0; i < run.snapshots.size(); ++i) {
    b.eval_history.emplace_back(run.snapshots[i].step, run.snapshots[i].eval_return);
    if (i < medium) b.pre_medium.push_back(policy_only(spec, run.snapshots[i].policy_params, run.agent.state_norm));
  }
  b.replay = data::TransitionDataset(env.id(), env.state_dim, env.action_dim);
  for (std::size_t i = 0; i < run.snapshots[medium].replay_size; ++i) b.replay.push(run.replay.at(i));
  b.replay.header.behavior_tag = data::BehaviorTag::medium_replay;
  b.replay.finalize_stats();
  return b;
}

void save_bundle(const BehaviorBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ckpt::Checkpoint c;
  c.kind = "behavior";
  c.nets.push_back({"medium_policy", b.medium.policy.spec(), b.medium.policy.params()});
  c.nets.push_back({"expert_policy", b.expert.policy.spec(), b.expert.policy.params()});
  for (std::size_t i = 0; i < b.pre_medium.size(); ++i) {
    c.nets.push_back({"pre_medium_" + std::to_string(i), b.pre_medium[i].policy.spec(), b.pre_medium[i].policy.params()});
  }
  c.extra["env_id"] = b.env_id;
  c.extra["medium_return"] = b.medium_return;
  c.extra["expert_return"] = b.expert_return;
  c.extra["medium_step"] = b.medium_step;
  c.extra["expert_step"] = b.expert_step;
  c.extra["pre_medium_count"] = b.pre_medium.size();
  c.extra["state_norm"] = {{"mean", b.medium.state_norm.mean}, {"std", b.medium.state_norm.stdev}};
  ckpt::ordered_json hist = ckpt::ordered_json::array();
  for (const auto& [step, ret] : b.eval_history) hist.push_back({step, ret});
  c.extra["eval_history"] = hist;
  data::save_dataset(b.replay, dir / kReplayFile);
  ckpt::save_checkpoint(c, dir / kBundleFile);
}

bool bundle_exists(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / kBundleFile) && std::filesystem::exists(dir / kReplayFile);
}

BehaviorBundle load_bundle(const std::filesystem::path& dir) {
  if (!bundle_exists(dir)) {
    fail(ErrorCode::missing_artifact,
         "no behavior checkpoint in " + dir.string() +
             "; produce one with `moan gen-data --train-behavior --config <cfg> --out <dir>` (online SAC run that "
             "saves the medium/expert policies and the replay buffer)");
  }
  const ckpt::Checkpoint c = ckpt::load_checkpoint(dir / kBundleFile, "behavior");
  BehaviorBundle b;
  try {
    const model::Normalizer norm{c.extra.at("state_norm").at("mean").get<std::vector<double>>(),
                                 c.extra.at("state_norm").at("std").get<std::vector<double>>()};
    b.env_id = c.extra.at("env_id").get<std::string>();
    const auto& m = c.net("medium_policy");
    const auto& e = c.net("expert_policy");
    b.medium = policy_only(m.spec, m.params, norm);
    b.expert = policy_only(e.spec, e.params, norm);
    b.medium_return = c.extra.at("medium_return").get<double>();
    b.expert_return = c.extra.at("expert_return").get<double>();
    b.medium_step = c.extra.at("medium_step").get<int>();
    b.expert_step = c.extra.at("expert_step").get<int>();
    for (const auto& h : c.extra.at("eval_history")) b.eval_history.emplace_back(h[0].get<int>(), h[1].get<double>());
    const auto n_pre = c.extra.at("pre_medium_count").get<std::size_t>();
    for (std::size_t i = 0; i < n_pre; ++i) {
      const auto& p = c.net("pre_medium_" + std::to_string(i));
      b.pre_medium.push_back(policy_only(p.spec, p.params, norm));
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& ex) {
    fail(ErrorCode::format_mismatch, std::string("malformed behavior checkpoint: ") + ex.what());
  }
  b.replay = data::load_dataset(dir / kReplayFile);
  return b;
}

PolicyFn uniform_policy(int action_dim) {
  return [action_dim](std::span<const double>, Rng& rng) {
    std::vector<double> a(action_dim);
    for (double& v : a) v = rng.uniform(-1.0, 1.0);
    return a;
  };
}

PolicyFn agent_policy(const sac::SACAgent& agent) {
  return [agent](std::span<const double> s, Rng& rng) { return agent.sample_action(s, rng, false).action; };
}

Collected collect_transitions(const env::ContinuousEnv& env, const std::vector<PolicyFn>& policies, std::size_t n,
                              Rng& rng) {
  require(!policies.empty(), ErrorCode::invalid_argument, "collect_transitions: no policies");
  Collected out;
  out.data = data::TransitionDataset(env.id(), env.state_dim, env.action_dim);
  out.data.reserve(n);
  std::size_t episode = 0;
  while (out.data.size() < n) {
    const PolicyFn& pi = policies[episode % policies.size()];
    std::vector<double> s = env::env_reset(env, rng);
    double ret = 0.0;
    bool complete = false;
    for (int t = 0; t < env.horizon && out.data.size() < n; ++t) {
      const std::vector<double> a = pi(s, rng);
      env::StepResult res = env::env_step(env, s, a, rng);
      std::vector<double> a_stored(a);
      for (double& v : a_stored) v = std::clamp(v, -1.0, 1.0);
      out.data.push(s, a_stored, res.next_state, res.reward, res.done);
      ret += res.reward;
      if (res.done || t + 1 == env.horizon) {
        complete = true;
        break;
      }
      s = std::move(res.next_state);
    }
    if (complete) out.episode_returns.push_back(ret);
    ++episode;
  }
  return out;
}

data::TransitionDataset generate_dataset(const env::ContinuousEnv& env, data::BehaviorTag tag, std::size_t n_steps,
                                         std::uint64_t seed, const BehaviorBundle* bundle) {
  require(n_steps >= 1, ErrorCode::invalid_argument, "generate_dataset: n_steps must be >= 1");
  if (tag != data::BehaviorTag::random) {
    if (bundle == nullptr) {
      fail(ErrorCode::missing_artifact,
           "dataset tag '" + data::to_string(tag) +
               "' needs a trained behavior checkpoint; produce one with `moan gen-data --train-behavior` "
               "(online SAC run on the same env) and pass its directory via dataset.behavior_dir");
    }
    require(bundle->env_id == env.id(), ErrorCode::invalid_argument,
            "behavior checkpoint was trained on " + bundle->env_id + ", not " + env.id());
  }
  Rng rng(derive_seed(seed, 0xda7a + static_cast<std::uint64_t>(tag)));
  data::TransitionDataset ds(env.id(), env.state_dim, env.action_dim);
  std::vector<double> returns;
  auto take = [&](const std::vector<PolicyFn>& policies, std::size_t n) {
    Collected c = collect_transitions(env, policies, n, rng);
    ds.append(c.data);
    returns.insert(returns.end(), c.episode_returns.begin(), c.episode_returns.end());
  };
  nlohmann::ordered_json extra;
  switch (tag) {
    case data::BehaviorTag::random:
      take({uniform_policy(env.action_dim)}, n_steps);
      break;
    case data::BehaviorTag::medium:
      take({agent_policy(bundle->medium)}, n_steps);
      break;
    case data::BehaviorTag::medium_expert:
      take({agent_policy(bundle->medium)}, n_steps / 2);
      take({agent_policy(bundle->expert)}, n_steps - n_steps / 2);
      extra["medium_records"] = n_steps / 2;
      extra["expert_records"] = n_steps - n_steps / 2;
      break;
    case data::BehaviorTag::medium_replay: {
      const std::size_t have = bundle->replay.size();
      if (have >= n_steps) {
        std::vector<std::size_t> idx(n_steps);
        for (std::size_t i = 0; i < n_steps; ++i) idx[i] = have - n_steps + i;
        ds.append(bundle->replay.subset(idx));
        extra["replay_records"] = n_steps;
      } else {
        ds.append(bundle->replay);
        std::vector<PolicyFn> policies{uniform_policy(env.action_dim)};
        for (const auto& p : bundle->pre_medium) policies.push_back(agent_policy(p));
        policies.push_back(agent_policy(bundle->medium));
        take(policies, n_steps - have);
        extra["replay_records"] = have;
        extra["topup_records"] = n_steps - have;
      }
      break;
    }
  }
  ds.header.behavior_tag = tag;
  ds.header.seed = seed;
  ds.finalize_stats();
  ds.header.extra["reward_convention"] = "per-step";
  ds.header.extra["episode_return_mean"] = mean_of(returns);
  ds.header.extra["episodes"] = returns.size();
  if (bundle != nullptr && tag != data::BehaviorTag::random) {
    ds.header.extra["behavior_medium_return"] = bundle->medium_return;
    ds.header.extra["behavior_expert_return"] = bundle->expert_return;
  }
  for (auto it = extra.begin(); it != extra.end(); ++it) ds.header.extra[it.key()] = it.value();
  return ds;
}

}  // namespace moan::behavior
