#pragma once

#include "mopo/common.hpp"

#include <json.hpp>

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace mopo {

/**
 * Finite discounted MDP (S, A, T, r, mu0, gamma) used for exact
 * ground-truth computations.
 *
 * Transitions are stored as an (S*A) x S row-stochastic matrix; row
 * `s * n_actions + a` is the next-state distribution of (s, a). Instances
 * are validated on construction and immutable afterwards.
 */
class TabularMdp {
 public:
  /// `r_max` defaults to max |reward|; pass it explicitly to keep bound
  /// constants fixed under reward edits.
  TabularMdp(std::size_t n_states, std::size_t n_actions, Mat transition, Mat reward,
             Vec initial_dist, double discount, std::optional<double> r_max = std::nullopt);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  const Mat& transition() const { return transition_; }
  const Mat& reward() const { return reward_; }
  const Vec& initial_dist() const { return initial_dist_; }
  double discount() const { return discount_; }
  double r_max() const { return r_max_; }

  /// Next-state distribution of (s, a) as a column vector.
  Vec next_dist(std::size_t s, std::size_t a) const;
  double probability(std::size_t s, std::size_t a, std::size_t s_next) const {
    return transition_(static_cast<Eigen::Index>(s * n_actions_ + a),
                       static_cast<Eigen::Index>(s_next));
  }

  /// Same reward, initial distribution, discount and r_max; new dynamics.
  TabularMdp with_transition(Mat transition) const;
  /// Same dynamics; new reward. r_max is kept unless the new reward exceeds it.
  TabularMdp with_reward(Mat reward) const;

  /// True when reward, initial distribution and discount coincide exactly.
  bool shares_reward_structure(const TabularMdp& other) const;

 private:
  std::size_t n_states_;
  std::size_t n_actions_;
  Mat transition_;
  Mat reward_;
  Vec initial_dist_;
  double discount_;
  double r_max_;
};

/// Stochastic policy pi(a|s) as an S x A row-stochastic matrix.
class TabularPolicy {
 public:
  explicit TabularPolicy(Mat probs);

  static TabularPolicy deterministic(const std::vector<std::size_t>& actions, std::size_t n_actions);
  static TabularPolicy uniform(std::size_t n_states, std::size_t n_actions);

  const Mat& probs() const { return probs_; }
  std::size_t n_states() const { return static_cast<std::size_t>(probs_.rows()); }
  std::size_t n_actions() const { return static_cast<std::size_t>(probs_.cols()); }

  /// Action index for deterministic policies; throws if the row is not a point mass.
  std::size_t action(std::size_t s) const;

 private:
  Mat probs_;
};

/// Discounted, improper state-action visitation measure; total mass 1/(1-gamma).
struct OccupancyMeasure {
  Mat rho;  // S x A
  double mass() const { return rho.sum(); }
  /// Improper expectation sum_{s,a} rho(s,a) f(s,a).
  double expect(const Mat& f) const;
};

/// Policy-averaged transition matrix P_pi (S x S) and reward r_pi (S).
Mat policy_transition(const TabularMdp& mdp, const TabularPolicy& policy);
Vec policy_reward(const TabularMdp& mdp, const TabularPolicy& policy);

/// V^pi by direct LU solve of (I - gamma P_pi) V = r_pi.
Vec value_function(const TabularMdp& mdp, const TabularPolicy& policy);

/// eta_M(pi) = mu0 . V^pi.
double expected_return(const TabularMdp& mdp, const TabularPolicy& policy);

/// rho(s,a) = pi(a|s) sum_t gamma^t P(s_t = s), via (I - gamma P_pi)^T d = mu0.
OccupancyMeasure occupancy_measure(const TabularMdp& mdp, const TabularPolicy& policy);

/// G(s,a) = E_{s'~T_model(s,a)}[V^pi_true(s')] - E_{s'~T_true(s,a)}[V^pi_true(s')].
/// The value function is always the TRUE MDP's.
double model_gap(const TabularMdp& true_mdp, const TabularMdp& model_mdp, const TabularPolicy& policy,
                 std::size_t s, std::size_t a);

/// All model gaps at once (S x A).
Mat model_gap_table(const TabularMdp& true_mdp, const TabularMdp& model_mdp, const TabularPolicy& policy);

struct TelescopingSides {
  double lhs;  // eta_model - eta_true
  double rhs;  // gamma * E_{rho model}[G]
};

TelescopingSides telescoping_sides(const TabularMdp& true_mdp, const TabularMdp& model_mdp,
                                   const TabularPolicy& policy);

/// Optimal action values Q* from value iteration to sup-norm residual <= tol.
Mat optimal_q_values(const TabularMdp& mdp, double tol);

/// Deterministic greedy policy from value iteration; ties go to the lowest action index.
TabularPolicy optimal_policy(const TabularMdp& mdp, double tol);

/// Greedy deterministic policy for a Q table (lowest-index tie-break).
TabularPolicy greedy_policy(const Mat& q);

/// Number of deterministic policies A^S, or nullopt when it exceeds `cap`.
std::optional<std::size_t> count_deterministic_policies(std::size_t n_states, std::size_t n_actions,
                                                        std::size_t cap);

/// The `index`-th deterministic policy in mixed-radix order (state 0 least significant).
TabularPolicy deterministic_policy_at(std::size_t index, std::size_t n_states, std::size_t n_actions);

void to_json(nlohmann::json& j, const TabularMdp& mdp);
TabularMdp tabular_mdp_from_json(const nlohmann::json& j);

}  // namespace mopo
