#pragma once

#include "mopo/uncertainty.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace mopo {

/// M~ = (S, A, T_model, r - lambda u, mu0, gamma).
class PenalizedModelMdp {
 public:
  PenalizedModelMdp(TabularMdp base, ErrorEstimator penalty, double lambda);

  const TabularMdp& base() const { return base_; }
  const ErrorEstimator& penalty() const { return penalty_; }
  double lambda() const { return lambda_; }
  const Mat& penalized_reward() const { return mdp_.reward(); }
  /// The penalized MDP itself (model dynamics, penalized reward).
  const TabularMdp& mdp() const { return mdp_; }

 private:
  TabularMdp base_;
  ErrorEstimator penalty_;
  double lambda_;
  TabularMdp mdp_;
};

PenalizedModelMdp build_penalized(const TabularMdp& model_mdp, const ErrorEstimator& estimator, double lambda);

/// pi-hat: greedy policy from value iteration on M~.
TabularPolicy mopo_solve(const PenalizedModelMdp& penalized, double tol);

/// Best true return among candidates with eps_u <= delta. Ties go to the
/// lowest candidate index. Throws when no candidate is feasible.
std::size_t pi_delta_index(const std::vector<double>& true_returns, const std::vector<double>& eps_u, double delta);
TabularPolicy pi_delta(const TabularMdp& true_mdp, const std::vector<TabularPolicy>& candidates,
                       const ErrorEstimator& estimator, const TabularMdp& model_mdp, double delta);

/// delta_min, then 31 log-spaced points up to delta_max (log spacing starts
/// at max(delta_min, 1e-6 delta_max) when delta_min is 0).
std::vector<double> delta_grid(double delta_min, double delta_max, std::size_t n_points = 32);

struct PolicyCertificate {
  std::size_t index = 0;
  std::vector<std::size_t> actions;
  double true_return = 0.0;
  double model_return = 0.0;
  double penalized_return = 0.0;
  double eps_u = 0.0;
  double supremum_slack = 0.0;          // eta(pi_hat) - (eta(pi) - 2 lambda eps_u)
  double two_sided_slack = 0.0;    // lambda eps_u - |eta_model - eta_true|
  double conservatism_slack = 0.0; // eta_true - eta_penalized
};

struct TheoremCertificate {
  double lambda = 0.0;
  double c = 0.0;
  double delta_min = 0.0;
  double delta_max = 0.0;
  std::vector<std::size_t> pi_hat_actions;
  double pi_hat_true_return = 0.0;
  double optimal_true_return = 0.0;
  double supremum_min_slack = 0.0;
  double delta_grid_min_slack = 0.0;
  double behavior_corollary_slack = 0.0;
  double two_sided_min_slack = 0.0;
  double conservatism_min_slack = 0.0;
  std::vector<double> deltas;
  std::vector<double> delta_grid_slacks;
  std::vector<double> pi_delta_returns;
  std::vector<PolicyCertificate> per_policy;

  double min_slack() const;
};

struct CertificateOptions {
  double tol = 1e-10;
  std::size_t max_policies = 1u << 16;
  std::optional<TabularPolicy> behavior;  // uniform when unset
};

/**
 * Solves M~ for pi-hat and checks the return guarantees against every
 * deterministic policy. An MDP always has a deterministic optimal policy,
 * so the supremum over policies is attained on the enumerated set.
 * Throws std::length_error when A^S exceeds `max_policies`.
 */
TheoremCertificate theorem_certificate(const TabularMdp& true_mdp, const TabularMdp& model_mdp,
                                       const ErrorEstimator& estimator, double lambda,
                                       const CertificateOptions& options = {});

nlohmann::json to_json(const TheoremCertificate& cert);

}  // namespace mopo
