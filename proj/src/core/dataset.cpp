#include "dataset.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "io.hpp"

namespace moan::data {

using nlohmann::ordered_json;

std::string to_string(BehaviorTag tag) {
  switch (tag) {
    case BehaviorTag::random: return "random";
    case BehaviorTag::medium: return "medium";
    case BehaviorTag::medium_replay: return "medium-replay";
    case BehaviorTag::medium_expert: return "medium-expert";
  }
  return "random";
}

BehaviorTag behavior_tag_from_string(const std::string& s) {
  if (s == "random") return BehaviorTag::random;
  if (s == "medium") return BehaviorTag::medium;
  if (s == "medium-replay") return BehaviorTag::medium_replay;
  if (s == "medium-expert") return BehaviorTag::medium_expert;
  fail(ErrorCode::invalid_argument,
       "unknown behavior tag '" + s + "' (expected random, medium, medium-replay, medium-expert)");
}

TransitionDataset::TransitionDataset(std::string env_id, int d_s, int d_a) {
  header.env_id = std::move(env_id);
  header.d_s = d_s;
  header.d_a = d_a;
}

void TransitionDataset::reserve(std::size_t n) {
  states_.reserve(n * d_s());
  next_states_.reserve(n * d_s());
  actions_.reserve(n * d_a());
  rewards_.reserve(n);
  dones_.reserve(n);
}

void TransitionDataset::push(std::span<const double> s, std::span<const double> a,
                             std::span<const double> s_next, double r, bool done) {
  require(static_cast<int>(s.size()) == d_s() && static_cast<int>(s_next.size()) == d_s() &&
              static_cast<int>(a.size()) == d_a(),
          ErrorCode::dimension_mismatch, "dataset push: dimensions do not match the header");
  auto finite = [](double v) { return std::isfinite(v); };
  require(std::all_of(s.begin(), s.end(), finite) && std::all_of(a.begin(), a.end(), finite) &&
              std::all_of(s_next.begin(), s_next.end(), finite) && std::isfinite(r),
          ErrorCode::non_finite, "dataset push: non-finite transition");
  for (double v : s) states_.push_back(static_cast<float>(v));
  for (double v : a) actions_.push_back(static_cast<float>(v));
  for (double v : s_next) next_states_.push_back(static_cast<float>(v));
  rewards_.push_back(static_cast<float>(r));
  dones_.push_back(done ? 1 : 0);
  header.count = rewards_.size();
}

void TransitionDataset::push(const Transition& t) {
  std::vector<double> s(t.s.begin(), t.s.end()), a(t.a.begin(), t.a.end()),
      sn(t.s_next.begin(), t.s_next.end());
  push(s, a, sn, t.r, t.done);
}

Transition TransitionDataset::at(std::size_t i) const {
  require(i < size(), ErrorCode::invalid_argument, "dataset index out of range");
  Transition t;
  auto s = state(i), a = action(i), sn = next_state(i);
  t.s.assign(s.begin(), s.end());
  t.a.assign(a.begin(), a.end());
  t.s_next.assign(sn.begin(), sn.end());
  t.r = rewards_[i];
  t.done = dones_[i] != 0;
  return t;
}

namespace {

void column_stats(const std::vector<float>& block, int width, std::size_t n,
                  std::vector<double>& mean, std::vector<double>& stdev) {
  mean.assign(width, 0.0);
  stdev.assign(width, 1.0);
  if (n == 0) return;
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < width; ++j) mean[j] += block[i * width + j];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<double> var(width, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < width; ++j) {
      const double d = block[i * width + j] - mean[j];
      var[j] += d * d;
    }
  }
  for (int j = 0; j < width; ++j) {
    stdev[j] = std::max(std::sqrt(var[j] / static_cast<double>(n)), kStdFloor);
  }
}

}  // namespace

void TransitionDataset::finalize_stats() {
  header.count = size();
  column_stats(states_, d_s(), size(), header.state_mean, header.state_std);
  column_stats(actions_, d_a(), size(), header.action_mean, header.action_std);
  std::vector<double> rm, rs;
  column_stats(rewards_, 1, size(), rm, rs);
  header.reward_mean = rm[0];
  header.reward_std = rs[0];
}

TransitionDataset TransitionDataset::subset(std::span<const std::size_t> indices) const {
  TransitionDataset out(header.env_id, d_s(), d_a());
  out.header = header;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    require(i < size(), ErrorCode::invalid_argument, "subset index out of range");
    out.states_.insert(out.states_.end(), states_.begin() + i * d_s(), states_.begin() + (i + 1) * d_s());
    out.actions_.insert(out.actions_.end(), actions_.begin() + i * d_a(), actions_.begin() + (i + 1) * d_a());
    out.next_states_.insert(out.next_states_.end(), next_states_.begin() + i * d_s(),
                            next_states_.begin() + (i + 1) * d_s());
    out.rewards_.push_back(rewards_[i]);
    out.dones_.push_back(dones_[i]);
  }
  out.finalize_stats();
  return out;
}

void TransitionDataset::append(const TransitionDataset& other) {
  require(other.d_s() == d_s() && other.d_a() == d_a(), ErrorCode::dimension_mismatch,
          "append: datasets have different dimensions");
  states_.insert(states_.end(), other.states_.begin(), other.states_.end());
  actions_.insert(actions_.end(), other.actions_.begin(), other.actions_.end());
  next_states_.insert(next_states_.end(), other.next_states_.begin(), other.next_states_.end());
  rewards_.insert(rewards_.end(), other.rewards_.begin(), other.rewards_.end());
  dones_.insert(dones_.end(), other.dones_.begin(), other.dones_.end());
  header.count = size();
}

bool TransitionDataset::same_records(const TransitionDataset& other) const {
  auto bits_equal = [](const std::vector<float>& x, const std::vector<float>& y) {
    return x.size() == y.size() &&
           std::equal(x.begin(), x.end(), y.begin(), [](float p, float q) {
             return std::bit_cast<std::uint32_t>(p) == std::bit_cast<std::uint32_t>(q);
           });
  };
  return d_s() == other.d_s() && d_a() == other.d_a() && bits_equal(states_, other.states_) &&
         bits_equal(actions_, other.actions_) && bits_equal(next_states_, other.next_states_) &&
         bits_equal(rewards_, other.rewards_) && dones_ == other.dones_;
}

std::size_t record_bytes(int d_s, int d_a) {
  return static_cast<std::size_t>(4 * (2 * d_s + d_a + 1) + 1);
}

namespace {

std::vector<std::uint8_t> encode_records(const TransitionDataset& ds) {
  std::vector<std::uint8_t> out;
  out.reserve(ds.size() * record_bytes(ds.d_s(), ds.d_a()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (float v : ds.state(i)) io::put_f32(out, v);
    for (float v : ds.action(i)) io::put_f32(out, v);
    for (float v : ds.next_state(i)) io::put_f32(out, v);
    io::put_f32(out, ds.reward(i));
    out.push_back(ds.done(i) ? 1 : 0);
  }
  return out;
}

ordered_json header_json(const TransitionDataset& ds, std::uint32_t payload_crc) {
  const DatasetHeader& h = ds.header;
  ordered_json j;
  j["magic"] = kDatasetMagic;
  j["version"] = kDatasetVersion;
  j["config_hash"] = h.config_hash;
  j["env_id"] = h.env_id;
  j["d_s"] = h.d_s;
  j["d_a"] = h.d_a;
  j["count"] = ds.size();
  j["behavior_tag"] = to_string(h.behavior_tag);
  j["state_mean"] = h.state_mean;
  j["state_std"] = h.state_std;
  j["action_mean"] = h.action_mean;
  j["action_std"] = h.action_std;
  j["reward_mean"] = h.reward_mean;
  j["reward_std"] = h.reward_std;
  j["seed"] = h.seed;
  j["payload_crc32"] = payload_crc;
  for (auto it = h.extra.begin(); it != h.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

const char* kFixedKeys[] = {"magic",      "version",    "config_hash", "env_id",     "d_s",
                            "d_a",        "count",      "behavior_tag", "state_mean", "state_std",
                            "action_mean", "action_std", "reward_mean", "reward_std", "seed",
                            "payload_crc32"};

}  // namespace

std::string header_line(const TransitionDataset& ds) {
  return header_json(ds, io::crc32(encode_records(ds))).dump();
}

void save_dataset(const TransitionDataset& ds, const std::filesystem::path& path) {
  const auto payload = encode_records(ds);
  const std::string line = header_json(ds, io::crc32(payload)).dump() + "\n";
  std::vector<std::uint8_t> bytes(line.begin(), line.end());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  io::write_file_atomic(path, bytes);
}

TransitionDataset load_dataset(const std::filesystem::path& path,
                               const std::string& expected_config_hash) {
  require(std::filesystem::exists(path), ErrorCode::missing_artifact, "no dataset at " + path.string());
  const auto bytes = io::read_file(path);
  const auto newline = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (newline == bytes.end()) fail(ErrorCode::format_mismatch, path.string() + ": missing header line");
  ordered_json j;
  try {
    j = ordered_json::parse(std::string(bytes.begin(), newline));
  } catch (const std::exception& e) {
    fail(ErrorCode::format_mismatch, path.string() + ": header is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("magic", "") != kDatasetMagic) {
    fail(ErrorCode::format_mismatch, path.string() + ": not a dataset file (bad magic)");
  }
  if (j.value("version", -1) != kDatasetVersion) {
    fail(ErrorCode::format_mismatch, path.string() + ": unsupported dataset format version " +
                                         j["version"].dump());
  }
  TransitionDataset ds;
  DatasetHeader& h = ds.header;
  try {
    h.config_hash = j.at("config_hash").get<std::string>();
    h.env_id = j.at("env_id").get<std::string>();
    h.d_s = j.at("d_s").get<int>();
    h.d_a = j.at("d_a").get<int>();
    h.count = j.at("count").get<std::size_t>();
    h.behavior_tag = behavior_tag_from_string(j.at("behavior_tag").get<std::string>());
    h.state_mean = j.at("state_mean").get<std::vector<double>>();
    h.state_std = j.at("state_std").get<std::vector<double>>();
    h.action_mean = j.at("action_mean").get<std::vector<double>>();
    h.action_std = j.at("action_std").get<std::vector<double>>();
    h.reward_mean = j.at("reward_mean").get<double>();
    h.reward_std = j.at("reward_std").get<double>();
    h.seed = j.at("seed").get<std::uint64_t>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::format_mismatch, path.string() + ": malformed header: " + e.what());
  }
  if (!expected_config_hash.empty() && h.config_hash != expected_config_hash) {
    fail(ErrorCode::format_mismatch, path.string() + ": config hash " + h.config_hash +
                                         " does not match expected " + expected_config_hash);
  }
  require(h.d_s >= 1 && h.d_a >= 1, ErrorCode::format_mismatch, path.string() + ": bad dimensions");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(std::begin(kFixedKeys), std::end(kFixedKeys), it.key()) == std::end(kFixedKeys)) {
      h.extra[it.key()] = it.value();
    }
  }
  const std::size_t rb = record_bytes(h.d_s, h.d_a);
  const std::size_t payload_size = static_cast<std::size_t>(bytes.end() - (newline + 1));
  if (payload_size != h.count * rb) {
    fail(ErrorCode::format_mismatch, path.string() + ": payload holds " + std::to_string(payload_size) +
                                         " bytes, header promises " + std::to_string(h.count) +
                                         " records of " + std::to_string(rb) + " bytes");
  }
  const std::uint8_t* p = &*(newline + 1);
  if (j.contains("payload_crc32")) {
    const auto crc = io::crc32(std::span(p, payload_size));
    if (crc != j["payload_crc32"].get<std::uint32_t>()) {
      fail(ErrorCode::format_mismatch, path.string() + ": payload checksum mismatch");
    }
  }
  const std::size_t count = h.count;
  ds.reserve(count);
  std::vector<double> s(h.d_s), a(h.d_a), sn(h.d_s);
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& v : s) { v = io::get_f32(p); p += 4; }
    for (auto& v : a) { v = io::get_f32(p); p += 4; }
    for (auto& v : sn) { v = io::get_f32(p); p += 4; }
    const double r = io::get_f32(p);
    p += 4;
    const bool done = *p++ != 0;
    ds.push(s, a, sn, r, done);
  }
  return ds;
}

}  // namespace moan::data
