#pragma once

#include "mopo/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace mopo {

/// A contiguous run of records produced by one behavior source.
struct DatasetSegment {
  std::string source;
  std::size_t begin = 0;
  std::size_t count = 0;
};

struct DatasetMeta {
  std::string env_name;
  std::string behavior_kind;
  std::uint64_t seed = 0;
  std::string reward_name;      // reward currently stored in the records
  std::string original_reward;  // reward the behavior was trained on
  std::vector<DatasetSegment> segments;
};

/**
 * Static batch of (s, a, r, s', done) records. Matrices store one record per
 * column so they can be fed to the networks without copies. `done` marks
 * episode boundaries (termination or time limit).
 */
class TransitionDataset {
 public:
  TransitionDataset() = default;
  TransitionDataset(Mat states, Mat actions, Vec rewards, Mat next_states, std::vector<char> dones, DatasetMeta meta);

  std::size_t size() const { return static_cast<std::size_t>(rewards_.size()); }
  bool empty() const { return size() == 0; }
  int state_dim() const { return static_cast<int>(states_.rows()); }
  int action_dim() const { return static_cast<int>(actions_.rows()); }

  const Mat& states() const { return states_; }
  const Mat& actions() const { return actions_; }
  const Vec& rewards() const { return rewards_; }
  const Mat& next_states() const { return next_states_; }
  const std::vector<char>& dones() const { return dones_; }
  const DatasetMeta& meta() const { return meta_; }
  DatasetMeta& meta() { return meta_; }

  /// Copy with rewards replaced; all other arrays are untouched.
  TransitionDataset with_rewards(Vec rewards) const;

  /// Records at the given indices, in order.
  TransitionDataset select(const std::vector<std::size_t>& indices) const;

  /// Concatenation. Segments of `tail` are shifted; meta of `*this` is kept.
  TransitionDataset concat(const TransitionDataset& tail) const;

 private:
  void validate() const;

  Mat states_;
  Mat actions_;
  Vec rewards_;
  Mat next_states_;
  std::vector<char> dones_;
  DatasetMeta meta_;
};

/// Incremental record collector.
class DatasetBuilder {
 public:
  DatasetBuilder(int state_dim, int action_dim) : state_dim_(state_dim), action_dim_(action_dim) {}

  void add(const Vec& s, const Vec& a, double r, const Vec& s_next, bool done);
  std::size_t size() const { return rewards_.size(); }
  TransitionDataset build(DatasetMeta meta) const;

 private:
  int state_dim_;
  int action_dim_;
  std::vector<double> states_, actions_, rewards_, next_states_;
  std::vector<char> dones_;
};

nlohmann::json dataset_header(const TransitionDataset& data);

/// JSON Lines, one {"s":[...],"a":[...],"r":x,"s2":[...],"d":bool} per line,
/// plus a sidecar header `<path>.header.json`.
void write_dataset(const TransitionDataset& data, const std::filesystem::path& path);
TransitionDataset read_dataset(const std::filesystem::path& path);
std::filesystem::path header_path_for(const std::filesystem::path& path);

}  // namespace mopo
