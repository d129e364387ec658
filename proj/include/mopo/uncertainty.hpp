#pragma once

#include "mopo/dynamics.hpp"
#include "mopo/mdp.hpp"

#include <functional>
#include <memory>
#include <string>

namespace mopo {

enum class EstimatorKind { oracle_tv, oracle_true_pred_error, max_std, mean_std, disagreement, zero, table };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);

/// Batched deterministic next-state query of the real dynamics (one column per input).
using TrueNextState = std::function<Mat(const Mat& states, const Mat& actions)>;

/**
 * Error estimator u(s, a). Tabular estimators carry an S x A table;
 * continuous ones wrap a batched evaluation over (state, action) columns.
 * Estimators are immutable and may be evaluated concurrently.
 */
class ErrorEstimator {
 public:
  using BatchFn = std::function<Vec(const Mat& states, const Mat& actions)>;

  ErrorEstimator(EstimatorKind kind, Mat table);
  ErrorEstimator(EstimatorKind kind, BatchFn fn);

  EstimatorKind kind() const { return kind_; }
  bool is_tabular() const { return table_.size() > 0; }
  const Mat& table() const;

  double operator()(std::size_t s, std::size_t a) const;
  Vec evaluate(const Mat& states, const Mat& actions) const;
  double evaluate(const Vec& state, const Vec& action) const;

 private:
  EstimatorKind kind_;
  Mat table_;
  BatchFn fn_;
};

/// u(s,a) = TV(T_model(s,a), T_true(s,a)).
ErrorEstimator oracle_tv(const TabularMdp& true_mdp, const TabularMdp& model_mdp);
ErrorEstimator tabular_estimator(Mat table);
ErrorEstimator constant_estimator(std::size_t n_states, std::size_t n_actions, double value);
/// u = 0 on every input; works for both tracks.
ErrorEstimator zero_estimator();

/// Per-member scale: sqrt of the summed predicted variances (Frobenius norm
/// of the diagonal std matrix); one row per elite, one column per input.
Mat elite_std_norms(const GaussianDynamicsEnsemble& ensemble, const Mat& states, const Mat& actions);

/// max over elites of the std Frobenius norm.
ErrorEstimator max_std(std::shared_ptr<const GaussianDynamicsEnsemble> ensemble);
/// mean over elites of the std Frobenius norm.
ErrorEstimator mean_std(std::shared_ptr<const GaussianDynamicsEnsemble> ensemble);
/// max over elites of |mu_i - mean_j mu_j| on the full (next state, reward) mean.
ErrorEstimator disagreement(std::shared_ptr<const GaussianDynamicsEnsemble> ensemble);
/// |elite-average next-state mean - true next state| for deterministic environments.
ErrorEstimator oracle_true_pred_error(TrueNextState truth, std::shared_ptr<const GaussianDynamicsEnsemble> ensemble);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_rollouts = 0;
};

/// Exact eps_u(pi) = sum rho^pi_model(s,a) u(s,a).
double epsilon_u(const TabularMdp& model_mdp, const TabularPolicy& policy, const ErrorEstimator& estimator);

/// Discounted Monte Carlo estimate of eps_u on a tabular model, truncated at `horizon`.
MonteCarloEstimate epsilon_u_monte_carlo(const TabularMdp& model_mdp, const TabularPolicy& policy,
                                         const ErrorEstimator& estimator, int horizon, std::size_t n_rollouts,
                                         Rng& rng);

/// Continuous-track estimate: rollouts from `initial_state` under the ensemble
/// (uniform elite per step) with actions from `policy`.
struct ContinuousEpsilonConfig {
  int horizon = 100;
  std::size_t n_rollouts = 256;
  double discount = 0.99;
};

MonteCarloEstimate epsilon_u_monte_carlo(const GaussianDynamicsEnsemble& ensemble,
                                         const std::function<Vec(const Vec&, Rng&)>& policy,
                                         const std::function<Vec(Rng&)>& initial_state,
                                         const ErrorEstimator& estimator, const ContinuousEpsilonConfig& cfg,
                                         Rng& rng);

}  // namespace mopo
