#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace moan::data {

enum class BehaviorTag { random, medium, medium_replay, medium_expert };

std::string to_string(BehaviorTag tag);
BehaviorTag behavior_tag_from_string(const std::string& s);

inline constexpr double kStdFloor = 1e-6;

struct Transition {
  std::vector<float> s;
  std::vector<float> a;
  std::vector<float> s_next;
  float r = 0.0f;
  bool done = false;
};

struct DatasetHeader {
  std::string env_id;
  int d_s = 0;
  int d_a = 0;
  std::size_t count = 0;
  BehaviorTag behavior_tag = BehaviorTag::random;
  std::vector<double> state_mean, state_std;
  std::vector<double> action_mean, action_std;
  double reward_mean = 0.0;
  double reward_std = 1.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  // Provenance that is not part of the fixed schema (behavior returns,
  // episode counts, reward convention, ...). Serialized after the fixed keys.
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

// Records are stored column-wise: row i of each block is transition i.
class TransitionDataset {
 public:
  TransitionDataset() = default;
  TransitionDataset(std::string env_id, int d_s, int d_a);

  DatasetHeader header;

  std::size_t size() const { return rewards_.size(); }
  bool empty() const { return rewards_.empty(); }
  int d_s() const { return header.d_s; }
  int d_a() const { return header.d_a; }

  void reserve(std::size_t n);
  void push(std::span<const double> s, std::span<const double> a, std::span<const double> s_next,
            double r, bool done);
  void push(const Transition& t);
  Transition at(std::size_t i) const;

  std::span<const float> state(std::size_t i) const { return {states_.data() + i * d_s(), static_cast<std::size_t>(d_s())}; }
  std::span<const float> action(std::size_t i) const { return {actions_.data() + i * d_a(), static_cast<std::size_t>(d_a())}; }
  std::span<const float> next_state(std::size_t i) const { return {next_states_.data() + i * d_s(), static_cast<std::size_t>(d_s())}; }
  float reward(std::size_t i) const { return rewards_[i]; }
  bool done(std::size_t i) const { return dones_[i] != 0; }

  // Recompute normalization statistics and count from the records.
  void finalize_stats();

  // Sub-dataset built from the given record indices; header stats recomputed.
  TransitionDataset subset(std::span<const std::size_t> indices) const;
  void append(const TransitionDataset& other);

  bool same_records(const TransitionDataset& other) const;

 private:
  std::vector<float> states_;
  std::vector<float> actions_;
  std::vector<float> next_states_;
  std::vector<float> rewards_;
  std::vector<std::uint8_t> dones_;
};

// Canonical file: one UTF-8 JSON header line, then `count` little-endian
// records of d_s f32 (s), d_a f32 (a), d_s f32 (s'), f32 (r), u8 (done).
inline constexpr const char* kDatasetMagic = "MOAN-DATASET";
inline constexpr int kDatasetVersion = 1;

std::string header_line(const TransitionDataset& ds);
void save_dataset(const TransitionDataset& ds, const std::filesystem::path& path);
// Rejects bad magic, version, truncated payloads and checksum mismatches.
// When expected_config_hash is non-empty it must match the header.
TransitionDataset load_dataset(const std::filesystem::path& path,
                               const std::string& expected_config_hash = "");

std::size_t record_bytes(int d_s, int d_a);

}  // namespace moan::data
