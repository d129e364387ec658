#pragma once

#include "mopo/actor_critic.hpp"
#include "mopo/dataset.hpp"
#include "mopo/envs.hpp"

#include <filesystem>
#include <map>
#include <optional>

namespace mopo {

enum class DatasetKind { random, medium, mixed, medium_expert };
std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& name);

struct DatasetRecipe {
  DatasetKind kind = DatasetKind::random;
  std::size_t steps = 50000;
  std::uint64_t behavior_seed = 0;
  /// Reward the behavior is trained and recorded with; empty means the env default.
  std::string reward;
  /// medium-expert: share of records from the expert; the rest come from the partner.
  double expert_fraction = 0.5;
  DatasetKind partner = DatasetKind::medium;
};

/// Online actor-critic training of the behavior policy. Thresholds are
/// normalized scores (random policy 0, scripted expert 100) of the
/// deterministic policy; they are our own choices for the toy tasks.
struct BehaviorConfig {
  ActorCriticConfig actor_critic;
  std::size_t batch_size = 256;
  std::size_t warmup_steps = 1000;  // uniform random actions before learning starts
  std::size_t eval_every = 1000;
  int eval_episodes = 5;
  double medium_threshold = 40.0;
  double mixed_threshold = 60.0;
  double expert_threshold = 90.0;
};

/// Scripted anchors per task ("env" or "env:reward").
struct Anchor {
  double random_return = 0.0;
  double expert_return = 0.0;
  std::uint64_t anchor_seed = 0;
};

class AnchorTable {
 public:
  AnchorTable() = default;
  explicit AnchorTable(std::map<std::string, Anchor> anchors) : anchors_(std::move(anchors)) {}

  static AnchorTable load(const std::filesystem::path& path);
  /// The versioned table shipped in data/anchors.json.
  static const AnchorTable& builtin();
  void save(const std::filesystem::path& path) const;

  const Anchor& at(const std::string& task) const;
  bool contains(const std::string& task) const { return anchors_.count(task) > 0; }
  const std::map<std::string, Anchor>& all() const { return anchors_; }
  void set(const std::string& task, Anchor a) { anchors_[task] = a; }

 private:
  std::map<std::string, Anchor> anchors_;
};

std::string task_key(const std::string& env_name, const std::string& reward_name);

/// Mean returns of the uniform random policy and the scripted expert.
Anchor compute_anchor(const std::string& env_name, const std::string& reward_name, std::uint64_t seed,
                      int n_episodes = 50);
AnchorTable compute_builtin_anchors();

/// 100 (raw - random) / (expert - random).
double normalized_score(const std::string& task, double raw_return, const AnchorTable& anchors = AnchorTable::builtin());

/// Behavior policy training failed to hit a return threshold within the budget.
class ThresholdNotReached : public std::runtime_error {
 public:
  ThresholdNotReached(const std::string& what, double attained) : std::runtime_error(what), attained_(attained) {}
  double attained_score() const { return attained_; }

 private:
  double attained_;
};

TransitionDataset collect_dataset(const ToyEnv& env, const DatasetRecipe& recipe, std::uint64_t seed,
                                  const BehaviorConfig& behavior = {}, const AnchorTable& anchors = AnchorTable::builtin());

/// Replaces rewards record by record from (s, a, s'); nothing else changes.
TransitionDataset relabel_rewards(const TransitionDataset& data, const std::string& new_reward_name);

struct BatchStats {
  double mean_return = 0.0;
  double max_return = 0.0;
  std::size_t episodes = 0;
};

/// Undiscounted returns over complete episodes. An episode ends at a done
/// flag; unfinished runs at segment ends or at the end of the data are dropped.
BatchStats batch_stats(const TransitionDataset& data);
std::vector<double> episode_returns(const TransitionDataset& data);

/// Terminal flags (no bootstrap) of a dataset, from the env predicate on s'.
std::vector<char> terminal_flags(const TransitionDataset& data);

}  // namespace mopo
