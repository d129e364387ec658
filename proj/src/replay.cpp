#include "mopo/replay.hpp"

namespace mopo {

namespace {
using Index = Eigen::Index;
Index idx(std::size_t i) { return static_cast<Index>(i); }
}  // namespace

RolloutBuffer::RolloutBuffer(int state_dim, int action_dim, std::size_t capacity)
    : state_dim_(state_dim), action_dim_(action_dim), capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("buffer capacity must be positive");
  if (state_dim < 1 || action_dim < 1) throw std::invalid_argument("buffer dimensions must be positive");
  states_.resize(state_dim, idx(capacity));
  next_states_.resize(state_dim, idx(capacity));
  actions_.resize(action_dim, idx(capacity));
  rewards_.resize(idx(capacity));
  terminal_.resize(capacity);
  audit_.resize(capacity);
}

void RolloutBuffer::add(const Vec& s, const Vec& a, double r, const Vec& s_next, bool terminal, RolloutAudit audit) {
  if (s.size() != state_dim_ || s_next.size() != state_dim_ || a.size() != action_dim_) {
    throw std::invalid_argument("transition dimensions do not match the buffer");
  }
  const Index c = idx(head_);
  states_.col(c) = s;
  actions_.col(c) = a;
  rewards_(c) = r;
  next_states_.col(c) = s_next;
  terminal_[head_] = terminal ? 1 : 0;
  audit_[head_] = audit;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
  ++inserted_;
}

std::size_t RolloutBuffer::physical(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("buffer index out of range");
  return (head_ + capacity_ - size_ + i) % capacity_;
}

Vec RolloutBuffer::state(std::size_t i) const { return states_.col(idx(physical(i))); }
Vec RolloutBuffer::action(std::size_t i) const { return actions_.col(idx(physical(i))); }
double RolloutBuffer::reward(std::size_t i) const { return rewards_(idx(physical(i))); }
Vec RolloutBuffer::next_state(std::size_t i) const { return next_states_.col(idx(physical(i))); }
bool RolloutBuffer::terminal(std::size_t i) const { return terminal_[physical(i)] != 0; }
const RolloutAudit& RolloutBuffer::audit(std::size_t i) const { return audit_[physical(i)]; }

TransitionBatch RolloutBuffer::gather(const std::vector<std::size_t>& logical) const {
  std::vector<Index> cols(logical.size());
  for (std::size_t k = 0; k < logical.size(); ++k) cols[k] = idx(physical(logical[k]));
  TransitionBatch b;
  b.states = states_(Eigen::all, cols);
  b.actions = actions_(Eigen::all, cols);
  b.rewards = rewards_(cols);
  b.next_states = next_states_(Eigen::all, cols);
  b.terminal.resize(idx(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) b.terminal(idx(k)) = terminal_[static_cast<std::size_t>(cols[k])];
  return b;
}

TransitionBatch RolloutBuffer::sample(std::size_t n, Rng& rng) const {
  if (empty()) throw std::logic_error("cannot sample from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> logical(n);
  for (auto& i : logical) i = pick(rng);
  return gather(logical);
}

TransitionDataset RolloutBuffer::to_dataset(DatasetMeta meta, const std::vector<char>* episode_ends) const {
  if (episode_ends && episode_ends->size() != size_) throw std::invalid_argument("episode end flags do not match");
  DatasetBuilder builder(state_dim_, action_dim_);
  for (std::size_t i = 0; i < size_; ++i) {
    const bool done = episode_ends ? (*episode_ends)[i] != 0 : terminal(i);
    builder.add(state(i), action(i), reward(i), next_state(i), done);
  }
  return builder.build(std::move(meta));
}

TransitionBatch sample_dataset(const TransitionDataset& data, std::size_t n, Rng& rng,
                               const std::vector<char>& terminal_flags) {
  if (data.empty()) throw std::logic_error("cannot sample from an empty dataset");
  if (terminal_flags.size() != data.size()) throw std::invalid_argument("terminal flags do not match the dataset");
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<Index> cols(n);
  for (auto& c : cols) c = idx(pick(rng));
  TransitionBatch b;
  b.states = data.states()(Eigen::all, cols);
  b.actions = data.actions()(Eigen::all, cols);
  b.rewards = data.rewards()(cols);
  b.next_states = data.next_states()(Eigen::all, cols);
  b.terminal.resize(idx(n));
  for (std::size_t k = 0; k < n; ++k) b.terminal(idx(k)) = terminal_flags[static_cast<std::size_t>(cols[k])];
  return b;
}

TransitionBatch concat_batches(const TransitionBatch& a, const TransitionBatch& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  TransitionBatch out;
  out.states.resize(a.states.rows(), a.size() + b.size());
  out.states << a.states, b.states;
  out.actions.resize(a.actions.rows(), a.size() + b.size());
  out.actions << a.actions, b.actions;
  out.next_states.resize(a.next_states.rows(), a.size() + b.size());
  out.next_states << a.next_states, b.next_states;
  out.rewards.resize(a.size() + b.size());
  out.rewards << a.rewards, b.rewards;
  out.terminal.resize(a.size() + b.size());
  out.terminal << a.terminal, b.terminal;
  return out;
}

}  // namespace mopo
