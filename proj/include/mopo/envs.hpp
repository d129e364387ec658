#pragma once

#include "mopo/common.hpp"
#include "mopo/mdp.hpp"
#include "mopo/uncertainty.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mopo {

/// r(s, a, s'). Velocity terms are read from s' so rewards can be recomputed
/// from stored transitions.
using RewardFn = std::function<double(const Vec& s, const Vec& a, const Vec& s_next)>;
using TerminationFn = std::function<bool(const Vec& s_next)>;

struct StepResult {
  Vec next_state;
  double reward = 0.0;
  bool terminal = false;   // the state left the valid region (no bootstrap)
  bool truncated = false;  // the time limit was hit
};

/**
 * Single-owner mutable toy environment. Dynamics are a deterministic core
 * (`mean_next_state`) plus optional Gaussian process noise. The active reward
 * is chosen by name and can be swapped, which is how task-shift tasks are
 * built.
 */
class ToyEnv {
 public:
  virtual ~ToyEnv() = default;

  const std::string& name() const { return name_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  int max_episode_steps() const { return max_steps_; }
  double action_low() const { return -1.0; }
  double action_high() const { return 1.0; }

  const std::string& reward_name() const { return reward_name_; }
  void set_reward(const std::string& reward_name);
  double reward(const Vec& s, const Vec& a, const Vec& s_next) const { return reward_fn_(s, a, s_next); }

  Vec reset(Rng& rng);
  StepResult step(const Vec& action, Rng& rng);
  const Vec& state() const { return state_; }
  int elapsed_steps() const { return elapsed_; }

  /// Noise-free successor; also serves as the oracle for the true-error penalty.
  virtual Vec mean_next_state(const Vec& s, const Vec& a) const = 0;
  virtual bool is_terminal(const Vec& s_next) const = 0;
  virtual std::unique_ptr<ToyEnv> clone() const = 0;

  /// Names accepted by `set_reward`.
  virtual std::vector<std::string> reward_names() const = 0;
  virtual std::string default_reward() const = 0;

 protected:
  ToyEnv(std::string name, int state_dim, int action_dim, int max_steps, double noise_std);
  virtual Vec initial_state(Rng& rng) const = 0;
  virtual RewardFn make_reward(const std::string& reward_name) const = 0;
  /// Components that receive process noise.
  virtual std::vector<int> noisy_components() const { return {}; }

 private:
  std::string name_;
  int state_dim_;
  int action_dim_;
  int max_steps_;
  double noise_std_;
  std::string reward_name_;
  RewardFn reward_fn_;
  Vec state_;
  int elapsed_ = 0;
  bool needs_reset_ = true;
};

/// Planar point mass, state (x, y, vx, vy), force action in [-1,1]^2 with the
/// force norm capped at 1:
///   v' = 0.9 v + 0.2 f,  p' = p + 0.1 v'.
class PointMass2d : public ToyEnv {
 public:
  static constexpr double kDamping = 0.9;
  static constexpr double kGain = 0.2;
  static constexpr double kDt = 0.1;
  static constexpr double kVelocityCap = 3.0;  // saturation of velocity terms in rewards
  static constexpr double kControlCost = 0.1;

  explicit PointMass2d(double noise_std = 0.01);

  Vec mean_next_state(const Vec& s, const Vec& a) const override;
  bool is_terminal(const Vec& s_next) const override;
  std::unique_ptr<ToyEnv> clone() const override { return std::make_unique<PointMass2d>(*this); }
  std::vector<std::string> reward_names() const override;
  std::string default_reward() const override { return "forward"; }

  static Vec force(const Vec& a);
  /// Steady-state speed of a constant unit force.
  static double terminal_speed() { return kGain / (1.0 - kDamping); }

 protected:
  Vec initial_state(Rng& rng) const override;
  RewardFn make_reward(const std::string& reward_name) const override;
  std::vector<int> noisy_components() const override { return {2, 3}; }
};

/// Car on a sinusoidal hill, state (x, v), one force action. Height
/// h(x) = 0.45 sin(3x); the car starts near the valley floor.
class PointMassHill : public ToyEnv {
 public:
  static constexpr double kMinX = -1.2;
  static constexpr double kMaxX = 0.6;
  static constexpr double kMaxSpeed = 1.5;
  static constexpr double kDt = 0.1;
  static constexpr double kGravity = 1.0;
  static constexpr double kControlCost = 0.1;

  explicit PointMassHill(double noise_std = 0.005);

  Vec mean_next_state(const Vec& s, const Vec& a) const override;
  bool is_terminal(const Vec& s_next) const override;
  std::unique_ptr<ToyEnv> clone() const override { return std::make_unique<PointMassHill>(*this); }
  std::vector<std::string> reward_names() const override { return {"run", "climb"}; }
  std::string default_reward() const override { return "run"; }

  static double height(double x) { return 0.45 * std::sin(3.0 * x); }
  static constexpr double kValleyX = -0.5235987755982988;  // -pi/6, the height minimum

 protected:
  Vec initial_state(Rng& rng) const override;
  RewardFn make_reward(const std::string& reward_name) const override;
  std::vector<int> noisy_components() const override { return {1}; }
};

/// The 4 x 12 cliff walk. State is (row, col) with row 0 at the bottom; the
/// start is (0, 0), the goal (0, 11) and the cells in between are the cliff.
/// Continuous actions pick the dominant axis: +x right, -x left, +y up, -y down.
class GridworldCliff : public ToyEnv {
 public:
  static constexpr int kRows = 4;
  static constexpr int kCols = 12;
  enum Move { up = 0, right = 1, down = 2, left = 3 };

  GridworldCliff();

  Vec mean_next_state(const Vec& s, const Vec& a) const override;
  bool is_terminal(const Vec& s_next) const override;
  std::unique_ptr<ToyEnv> clone() const override { return std::make_unique<GridworldCliff>(*this); }
  std::vector<std::string> reward_names() const override { return {"cliff"}; }
  std::string default_reward() const override { return "cliff"; }

  static int discrete_action(const Vec& a);
  static bool is_cliff(int row, int col) { return row == 0 && col > 0 && col < kCols - 1; }
  static bool is_goal(int row, int col) { return row == 0 && col == kCols - 1; }

  /// Cells the walker can occupy (everything except the cliff), row-major.
  static std::vector<std::pair<int, int>> reachable_cells();
  /// Exact tabular model over reachable cells with four moves. The goal is
  /// absorbing with zero reward.
  static TabularMdp to_tabular_mdp(double discount);

 protected:
  Vec initial_state(Rng& rng) const override;
  RewardFn make_reward(const std::string& reward_name) const override;
};

std::vector<std::string> env_names();
std::unique_ptr<ToyEnv> make_env(const std::string& name);

/// Reward by (env, reward) name without constructing a stepping env.
RewardFn reward_function(const std::string& env_name, const std::string& reward_name);
TerminationFn termination_function(const std::string& env_name);
/// Batched noise-free successor of the named env, one column per query.
TrueNextState true_dynamics(const std::string& env_name);

/// Named policies used for anchors and reference returns.
using ActionPolicy = std::function<Vec(const Vec& state, Rng& rng)>;
ActionPolicy uniform_random_policy(int action_dim);
/// Scripted expert for (env, reward): the constant unit force along the
/// reward direction for point-mass tasks, a bang-bang pump for the hill and
/// the shortest safe path for the cliff walk.
ActionPolicy scripted_expert(const std::string& env_name, const std::string& reward_name);

struct EpisodeStats {
  std::vector<double> returns;
  double mean = 0.0;
  double std = 0.0;
};

/// Undiscounted returns of `n_episodes` episodes of `policy` under `reward_name`.
EpisodeStats run_episodes(const ToyEnv& prototype, const std::string& reward_name, const ActionPolicy& policy,
                          int n_episodes, std::uint64_t seed);

/// Parses "angle-<degrees>" and returns the angle in radians.
std::optional<double> parse_angle_reward(const std::string& reward_name);

}  // namespace mopo
