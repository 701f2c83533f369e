#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "adversarial.hpp"
#include "json.hpp"
#include "nn.hpp"
#include "sac.hpp"

namespace moan::ckpt {

using ordered_json = nlohmann::ordered_json;

inline constexpr const char* kCheckpointMagic = "MOAN-CKPT";
inline constexpr int kCheckpointVersion = 1;

struct NamedNet {
  std::string name;
  nn::NetSpec spec;
  std::vector<float> params;
};

// One JSON header line, then the f32 parameters of every net in order.
struct Checkpoint {
  std::string kind;
  std::string config_hash;
  std::vector<NamedNet> nets;
  ordered_json extra = ordered_json::object();

  const NamedNet& net(const std::string& name) const;
};

ordered_json spec_to_json(const nn::NetSpec& spec);
nn::NetSpec spec_from_json(const ordered_json& j);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
// Rejects bad magic/version, truncation, checksum failures and, when given,
// a different kind or config hash.
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_kind = "",
                           const std::string& expected_config_hash = "");

// Stage-1 model: members 0..N-1 then the discriminator.
Checkpoint model_checkpoint(const model::TrainedModel& m, const std::string& config_hash);
model::TrainedModel model_from_checkpoint(const Checkpoint& c);

// Policy, critics, targets, temperature.
Checkpoint agent_checkpoint(const sac::SACAgent& agent, const std::string& config_hash);
sac::SACAgent agent_from_checkpoint(const Checkpoint& c);

}  // namespace moan::ckpt
