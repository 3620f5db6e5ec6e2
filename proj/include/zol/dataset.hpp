#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace zol::env {

// One reward-free transition plus an independent future-state sample s_plus
// used as the FB loss's s+.
struct TransitionRecord {
  std::vector<double> s;
  std::vector<double> a;
  std::vector<double> s_next;
  std::vector<double> s_plus;
  double r = 0.0;  // meaningful only when the dataset carries rewards

  friend bool operator==(const TransitionRecord&, const TransitionRecord&) = default;
};

struct OfflineDataset {
  std::string env_tag;
  std::uint64_t seed = 0;
  std::uint32_t state_dim = 0;
  std::uint32_t action_dim = 0;
  bool has_reward = false;
  std::vector<TransitionRecord> records;

  std::uint64_t count() const { return records.size(); }

  friend bool operator==(const OfflineDataset&, const OfflineDataset&) = default;
};

// Little-endian binary layout: magic "ZOLD", version u32=1, env-tag length
// u32 + UTF-8 bytes, seed u64, count u64, state-dim u32, action-dim u32,
// has-reward u8, then count records of (s, a, s_next, s_plus, [r]) as f64.
void write_dataset(const OfflineDataset& ds, const std::string& path);
OfflineDataset read_dataset(const std::string& path);

// Same record layout as a CSV table with a header row.
void write_dataset_csv(const OfflineDataset& ds, const std::string& path);

}  // namespace zol::env
