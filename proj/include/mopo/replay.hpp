#pragma once

#include "mopo/common.hpp"
#include "mopo/dataset.hpp"

#include <vector>

namespace mopo {

/// Columns of sampled transitions. `terminal` is 1 where the backup must not
/// bootstrap.
struct TransitionBatch {
  Mat states;
  Mat actions;
  Vec rewards;
  Mat next_states;
  Vec terminal;

  Eigen::Index size() const { return rewards.size(); }
};

/// Extra per-record bookkeeping for model rollouts: the sampled reward before
/// the penalty, the penalty u(s, a) and the ensemble member that produced it.
struct RolloutAudit {
  double raw_reward = 0.0;
  double penalty = 0.0;
  int member = -1;
};

/**
 * Fixed-capacity FIFO ring of transitions. Logical index 0 is the oldest
 * record still held.
 */
class RolloutBuffer {
 public:
  RolloutBuffer(int state_dim, int action_dim, std::size_t capacity);

  void add(const Vec& s, const Vec& a, double r, const Vec& s_next, bool terminal, RolloutAudit audit = {});

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return size_ == 0; }
  /// Total insertions, including evicted ones.
  std::size_t inserted() const { return inserted_; }

  Vec state(std::size_t i) const;
  Vec action(std::size_t i) const;
  double reward(std::size_t i) const;
  Vec next_state(std::size_t i) const;
  bool terminal(std::size_t i) const;
  const RolloutAudit& audit(std::size_t i) const;
  /// Insertion number of the record at logical index i.
  std::size_t insertion_id(std::size_t i) const { return inserted_ - size_ + i; }

  TransitionBatch sample(std::size_t n, Rng& rng) const;
  TransitionBatch gather(const std::vector<std::size_t>& logical) const;

  /// All held records, oldest first, with `done` set from the terminal flags
  /// or `episode_ends`.
  TransitionDataset to_dataset(DatasetMeta meta, const std::vector<char>* episode_ends = nullptr) const;

 private:
  std::size_t physical(std::size_t i) const;

  int state_dim_;
  int action_dim_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // next write slot
  std::size_t inserted_ = 0;
  Mat states_, actions_, next_states_;
  Vec rewards_;
  std::vector<char> terminal_;
  std::vector<RolloutAudit> audit_;
};

/// Uniform-with-replacement batch from a static dataset. Dataset `done` flags
/// are episode boundaries, so `terminal` is taken from `is_terminal(s')`.
TransitionBatch sample_dataset(const TransitionDataset& data, std::size_t n, Rng& rng,
                               const std::vector<char>& terminal_flags);

/// Column-wise concatenation of two batches.
TransitionBatch concat_batches(const TransitionBatch& a, const TransitionBatch& b);

}  // namespace mopo
