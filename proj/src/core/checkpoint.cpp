#include "checkpoint.hpp"

#include <algorithm>

#include "error.hpp"
#include "io.hpp"

namespace moan::ckpt {

using nn::Network;

namespace {

template <typename T>
Network<T> to_network(const NamedNet& n) {
  Network<T> net(n.spec);
  require(net.param_count() == n.params.size(), ErrorCode::format_mismatch,
          "checkpoint net '" + n.name + "' has the wrong parameter count");
  for (std::size_t i = 0; i < n.params.size(); ++i) net.params()[i] = static_cast<T>(n.params[i]);
  return net;
}

ordered_json norm_json(const model::Normalizer& n) { return {{"mean", n.mean}, {"std", n.stdev}}; }

model::Normalizer norm_from(const ordered_json& j) {
  return {j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
}

}  // namespace

const NamedNet& Checkpoint::net(const std::string& name) const {
  for (const auto& n : nets) {
    if (n.name == name) return n;
  }
  fail(ErrorCode::missing_artifact, "checkpoint has no net named '" + name + "'");
}

ordered_json spec_to_json(const nn::NetSpec& spec) {
  ordered_json acts = ordered_json::array();
  for (auto a : spec.activations) acts.push_back(nn::to_string(a));
  return {{"layer_widths", spec.layer_widths}, {"activations", acts}, {"head", nn::to_string(spec.head)}};
}

nn::NetSpec spec_from_json(const ordered_json& j) {
  nn::NetSpec spec;
  spec.layer_widths = j.at("layer_widths").get<std::vector<int>>();
  for (const auto& a : j.at("activations")) spec.activations.push_back(nn::activation_from_string(a.get<std::string>()));
  spec.head = nn::head_from_string(j.at("head").get<std::string>());
  spec.validate();
  return spec;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::vector<std::uint8_t> payload;
  ordered_json nets = ordered_json::array();
  for (const auto& n : c.nets) {
    require(n.params.size() == n.spec.param_count(), ErrorCode::invalid_argument,
            "save_checkpoint: net '" + n.name + "' has the wrong parameter count");
    for (float v : n.params) io::put_f32(payload, v);
    ordered_json e = spec_to_json(n.spec);
    e["name"] = n.name;
    e["count"] = n.params.size();
    nets.push_back(e);
  }
  ordered_json h;
  h["magic"] = kCheckpointMagic;
  h["version"] = kCheckpointVersion;
  h["config_hash"] = c.config_hash;
  h["kind"] = c.kind;
  h["nets"] = nets;
  h["extra"] = c.extra;
  h["payload_crc32"] = io::crc32(payload);
  const std::string line = h.dump() + "\n";
  std::vector<std::uint8_t> bytes(line.begin(), line.end());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  io::write_file_atomic(path, bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind,
                           const std::string& expected_config_hash) {
  const auto bytes = io::read_file(path);
  const auto newline = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (newline == bytes.end()) fail(ErrorCode::format_mismatch, path.string() + ": missing header line");
  ordered_json h;
  try {
    h = ordered_json::parse(std::string(bytes.begin(), newline));
  } catch (const std::exception& e) {
    fail(ErrorCode::format_mismatch, path.string() + ": header is not valid JSON: " + e.what());
  }
  if (!h.is_object() || h.value("magic", "") != kCheckpointMagic) {
    fail(ErrorCode::format_mismatch, path.string() + ": not a checkpoint file (bad magic)");
  }
  if (h.value("version", -1) != kCheckpointVersion) {
    fail(ErrorCode::format_mismatch, path.string() + ": unsupported checkpoint version");
  }
  Checkpoint c;
  std::size_t total = 0;
  std::uint32_t crc = 0;
  try {
    c.kind = h.at("kind").get<std::string>();
    c.config_hash = h.at("config_hash").get<std::string>();
    c.extra = h.at("extra");
    crc = h.at("payload_crc32").get<std::uint32_t>();
    for (const auto& e : h.at("nets")) {
      NamedNet n;
      n.name = e.at("name").get<std::string>();
      n.spec = spec_from_json(e);
      const auto count = e.at("count").get<std::size_t>();
      require(count == n.spec.param_count(), ErrorCode::format_mismatch,
              path.string() + ": net '" + n.name + "' count does not match its spec");
      n.params.resize(count);
      total += count;
      c.nets.push_back(std::move(n));
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::format_mismatch, path.string() + ": malformed header: " + e.what());
  }
  if (!expected_kind.empty() && c.kind != expected_kind) {
    fail(ErrorCode::format_mismatch, path.string() + ": checkpoint kind '" + c.kind + "', expected '" +
                                         expected_kind + "'");
  }
  if (!expected_config_hash.empty() && c.config_hash != expected_config_hash) {
    fail(ErrorCode::format_mismatch, path.string() + ": config hash " + c.config_hash +
                                         " does not match expected " + expected_config_hash);
  }
  const auto payload_begin = newline + 1;
  const auto payload_size = static_cast<std::size_t>(bytes.end() - payload_begin);
  if (payload_size != 4 * total) {
    fail(ErrorCode::format_mismatch, path.string() + ": payload has " + std::to_string(payload_size) +
                                         " bytes, expected " + std::to_string(4 * total) + " (truncated?)");
  }
  if (io::crc32({&*payload_begin, payload_size}) != crc) {
    fail(ErrorCode::format_mismatch, path.string() + ": payload checksum mismatch");
  }
  const std::uint8_t* p = &*payload_begin;
  for (auto& n : c.nets) {
    for (float& v : n.params) {
      v = io::get_f32(p);
      p += 4;
    }
  }
  return c;
}

Checkpoint model_checkpoint(const model::TrainedModel& m, const std::string& config_hash) {
  Checkpoint c;
  c.kind = "model";
  c.config_hash = config_hash;
  const auto& ens = m.ensemble;
  for (int i = 0; i < ens.size(); ++i) {
    c.nets.push_back({"member" + std::to_string(i), ens.members[i].spec(), ens.members[i].params()});
  }
  c.nets.push_back({"discriminator", m.disc.net.spec(), m.disc.net.params()});
  c.extra["d_s"] = ens.d_s();
  c.extra["d_a"] = ens.d_a();
  c.extra["input_norm"] = norm_json(ens.input_norm);
  c.extra["output_norm"] = norm_json(ens.output_norm);
  c.extra["disc_state_norm"] = norm_json(m.disc.state_norm);
  c.extra["disc_action_norm"] = norm_json(m.disc.action_norm);
  c.extra["disc_reward_mean"] = m.disc.reward_mean;
  c.extra["disc_reward_std"] = m.disc.reward_std;
  c.extra["stop_epoch"] = m.report.stop_epoch;
  c.extra["best_epoch"] = m.report.best_epoch;
  c.extra["report"] = {{"gen_nll", m.report.gen_nll},
                       {"gen_adv_loss", m.report.gen_adv_loss},
                       {"disc_loss", m.report.disc_loss},
                       {"disc_accuracy", m.report.disc_accuracy},
                       {"holdout_mse", m.report.holdout_mse}};
  return c;
}

model::TrainedModel model_from_checkpoint(const Checkpoint& c) {
  require(c.kind == "model", ErrorCode::format_mismatch, "checkpoint is not a model checkpoint");
  model::TrainedModel m;
  try {
    const int d_s = c.extra.at("d_s").get<int>();
    const int d_a = c.extra.at("d_a").get<int>();
    const int n_members = static_cast<int>(c.nets.size()) - 1;
    require(n_members >= 1, ErrorCode::format_mismatch, "model checkpoint has no ensemble members");
    const auto& spec0 = c.nets.front().spec;
    std::vector<int> hidden(spec0.layer_widths.begin() + 1, spec0.layer_widths.end() - 1);
    m.ensemble = model::DynamicsEnsemble(d_s, d_a, n_members, hidden);
    for (int i = 0; i < n_members; ++i) {
      require(c.nets[i].spec == m.ensemble.members[i].spec(), ErrorCode::format_mismatch,
              "model checkpoint member spec mismatch");
      m.ensemble.members[i] = to_network<float>(c.nets[i]);
    }
    const auto& d = c.net("discriminator");
    std::vector<int> dh(d.spec.layer_widths.begin() + 1, d.spec.layer_widths.end() - 1);
    m.disc = model::Discriminator(d_s, d_a, dh);
    m.disc.net = to_network<float>(d);
    m.ensemble.input_norm = norm_from(c.extra.at("input_norm"));
    m.ensemble.output_norm = norm_from(c.extra.at("output_norm"));
    m.disc.state_norm = norm_from(c.extra.at("disc_state_norm"));
    m.disc.action_norm = norm_from(c.extra.at("disc_action_norm"));
    m.disc.reward_mean = c.extra.at("disc_reward_mean").get<double>();
    m.disc.reward_std = c.extra.at("disc_reward_std").get<double>();
    m.report.stop_epoch = c.extra.value("stop_epoch", 0);
    m.report.best_epoch = c.extra.value("best_epoch", 0);
    if (c.extra.contains("report")) {
      const auto& r = c.extra.at("report");
      m.report.gen_nll = r.at("gen_nll").get<std::vector<double>>();
      m.report.gen_adv_loss = r.at("gen_adv_loss").get<std::vector<double>>();
      m.report.disc_loss = r.at("disc_loss").get<std::vector<double>>();
      m.report.disc_accuracy = r.at("disc_accuracy").get<std::vector<double>>();
      m.report.holdout_mse = r.at("holdout_mse").get<std::vector<std::vector<double>>>();
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::format_mismatch, std::string("malformed model checkpoint: ") + e.what());
  }
  return m;
}

Checkpoint agent_checkpoint(const sac::SACAgent& agent, const std::string& config_hash) {
  Checkpoint c;
  c.kind = "agent";
  c.config_hash = config_hash;
  c.nets.push_back({"policy", agent.policy.spec(), agent.policy.params()});
  c.nets.push_back({"q1", agent.q1.spec(), agent.q1.params()});
  c.nets.push_back({"q2", agent.q2.spec(), agent.q2.params()});
  c.nets.push_back({"q1_target", agent.q1_target.spec(), agent.q1_target.params()});
  c.nets.push_back({"q2_target", agent.q2_target.spec(), agent.q2_target.params()});
  c.extra["log_alpha"] = agent.log_alpha;
  c.extra["target_entropy"] = agent.target_entropy;
  c.extra["state_norm"] = norm_json(agent.state_norm);
  return c;
}

sac::SACAgent agent_from_checkpoint(const Checkpoint& c) {
  require(c.kind == "agent", ErrorCode::format_mismatch, "checkpoint is not an agent checkpoint");
  sac::SACAgent a;
  try {
    a.policy = to_network<float>(c.net("policy"));
    a.q1 = to_network<float>(c.net("q1"));
    a.q2 = to_network<float>(c.net("q2"));
    a.q1_target = to_network<float>(c.net("q1_target"));
    a.q2_target = to_network<float>(c.net("q2_target"));
    a.log_alpha = c.extra.at("log_alpha").get<double>();
    a.target_entropy = c.extra.at("target_entropy").get<double>();
    a.state_norm = norm_from(c.extra.at("state_norm"));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::format_mismatch, std::string("malformed agent checkpoint: ") + e.what());
  }
  return a;
}

}  // namespace moan::ckpt
