#include "mopo/uncertainty.hpp"

#include <cmath>

namespace mopo {

namespace {

using Index = Eigen::Index;

void require_trained(const std::shared_ptr<const GaussianDynamicsEnsemble>& ens) {
  if (!ens || !ens->trained()) throw std::invalid_argument("estimator needs a trained ensemble");
}

MonteCarloEstimate summarize(const std::vector<double>& samples) {
  MonteCarloEstimate est;
  est.n_rollouts = samples.size();
  double sum = 0.0;
  for (double x : samples) sum += x;
  est.mean = sum / static_cast<double>(samples.size());
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double x : samples) ss += (x - est.mean) * (x - est.mean);
    est.std_error = std::sqrt(ss / static_cast<double>(samples.size() - 1) / static_cast<double>(samples.size()));
  }
  return est;
}

std::size_t draw_index(const Vec& probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return static_cast<std::size_t>(i);
  }
  // roundoff: fall back to the last index with positive mass
  for (Index i = probs.size(); i-- > 0;) {
    if (probs(i) > 0.0) return static_cast<std::size_t>(i);
  }
  return 0;
}

}  // namespace

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::oracle_tv:
      return "oracle-tv";
    case EstimatorKind::oracle_true_pred_error:
      return "oracle-true-pred-error";
    case EstimatorKind::max_std:
      return "max-std";
    case EstimatorKind::mean_std:
      return "mean-std";
    case EstimatorKind::disagreement:
      return "disagreement";
    case EstimatorKind::zero:
      return "zero";
    case EstimatorKind::table:
      return "table";
  }
  throw std::invalid_argument("unknown estimator kind");
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
  for (auto k : {EstimatorKind::oracle_tv, EstimatorKind::oracle_true_pred_error, EstimatorKind::max_std,
                 EstimatorKind::mean_std, EstimatorKind::disagreement, EstimatorKind::zero, EstimatorKind::table}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown estimator kind: " + name);
}

ErrorEstimator::ErrorEstimator(EstimatorKind kind, Mat table) : kind_(kind), table_(std::move(table)) {
  if (table_.size() == 0) throw std::invalid_argument("estimator table is empty");
  if (!table_.allFinite() || table_.minCoeff() < 0.0) {
    throw std::invalid_argument("estimator values must be finite and nonnegative");
  }
}

ErrorEstimator::ErrorEstimator(EstimatorKind kind, BatchFn fn) : kind_(kind), fn_(std::move(fn)) {
  if (!fn_) throw std::invalid_argument("estimator needs an evaluation function");
}

const Mat& ErrorEstimator::table() const {
  if (!is_tabular()) throw std::logic_error("estimator " + to_string(kind_) + " has no table");
  return table_;
}

double ErrorEstimator::operator()(std::size_t s, std::size_t a) const {
  const Mat& t = table();
  if (s >= static_cast<std::size_t>(t.rows()) || a >= static_cast<std::size_t>(t.cols())) {
    throw std::out_of_range("state/action outside the estimator table");
  }
  return t(static_cast<Index>(s), static_cast<Index>(a));
}

Vec ErrorEstimator::evaluate(const Mat& states, const Mat& actions) const {
  if (!fn_) throw std::logic_error("tabular estimator cannot evaluate continuous inputs");
  Vec u = fn_(states, actions);
  if (u.size() != states.cols()) throw std::logic_error("estimator returned the wrong number of values");
  if (!u.allFinite()) throw NumericalError("estimator " + to_string(kind_) + " produced non-finite values");
  return u;
}

double ErrorEstimator::evaluate(const Vec& state, const Vec& action) const { return evaluate(Mat(state), Mat(action))(0); }

ErrorEstimator oracle_tv(const TabularMdp& true_mdp, const TabularMdp& model_mdp) {
  if (true_mdp.n_states() != model_mdp.n_states() || true_mdp.n_actions() != model_mdp.n_actions()) {
    throw std::invalid_argument("true and model MDP shapes differ");
  }
  const auto S = static_cast<Index>(true_mdp.n_states());
  const auto A = static_cast<Index>(true_mdp.n_actions());
  Mat u(S, A);
  for (Index s = 0; s < S; ++s)
    for (Index a = 0; a < A; ++a)
      u(s, a) = 0.5 * (model_mdp.transition().row(s * A + a) - true_mdp.transition().row(s * A + a)).cwiseAbs().sum();
  return ErrorEstimator(EstimatorKind::oracle_tv, std::move(u));
}

ErrorEstimator tabular_estimator(Mat table) { return ErrorEstimator(EstimatorKind::table, std::move(table)); }

ErrorEstimator constant_estimator(std::size_t n_states, std::size_t n_actions, double value) {
  return tabular_estimator(Mat::Constant(static_cast<Index>(n_states), static_cast<Index>(n_actions), value));
}

ErrorEstimator zero_estimator() {
  return ErrorEstimator(EstimatorKind::zero, [](const Mat& states, const Mat&) { return Vec(Vec::Zero(states.cols())); });
}

Mat elite_std_norms(const GaussianDynamicsEnsemble& ensemble, const Mat& states, const Mat& actions) {
  const auto preds = ensemble.predict_elites(states, actions);
  Mat norms(static_cast<Index>(preds.size()), states.cols());
  for (std::size_t i = 0; i < preds.size(); ++i) norms.row(static_cast<Index>(i)) = preds[i].var.colwise().sum().cwiseSqrt();
  return norms;
}

ErrorEstimator max_std(std::shared_ptr<const GaussianDynamicsEnsemble> ensemble) {
  require_trained(ensemble);
  return ErrorEstimator(EstimatorKind::max_std, [ens = std::move(ensemble)](const Mat& s, const Mat& a) {
    return Vec(elite_std_norms(*ens, s, a).colwise().maxCoeff().transpose());
  });
}

ErrorEstimator mean_std(std::shared_ptr<const GaussianDynamicsEnsemble> ensemble) {
  require_trained(ensemble);
  return ErrorEstimator(EstimatorKind::mean_std, [ens = std::move(ensemble)](const Mat& s, const Mat& a) {
    return Vec(elite_std_norms(*ens, s, a).colwise().mean().transpose());
  });
}

ErrorEstimator disagreement(std::shared_ptr<const GaussianDynamicsEnsemble> ensemble) {
  require_trained(ensemble);
  return ErrorEstimator(EstimatorKind::disagreement, [ens = std::move(ensemble)](const Mat& s, const Mat& a) {
    const auto preds = ens->predict_elites(s, a);
    Mat avg = Mat::Zero(preds.front().mean.rows(), s.cols());
    for (const auto& p : preds) avg += p.mean;
    avg /= static_cast<double>(preds.size());
    Vec u = Vec::Zero(s.cols());
    for (const auto& p : preds) u = u.cwiseMax((p.mean - avg).colwise().norm().transpose());
    return u;
  });
}

ErrorEstimator oracle_true_pred_error(TrueNextState truth, std::shared_ptr<const GaussianDynamicsEnsemble> ensemble) {
  require_trained(ensemble);
  if (!truth) throw std::invalid_argument("environment does not expose queryable true dynamics");
  return ErrorEstimator(EstimatorKind::oracle_true_pred_error,
                        [ens = std::move(ensemble), truth = std::move(truth)](const Mat& s, const Mat& a) {
                          const auto preds = ens->predict_elites(s, a);
                          Mat avg = Mat::Zero(s.rows(), s.cols());
                          for (const auto& p : preds) avg += p.mean.topRows(s.rows());
                          avg /= static_cast<double>(preds.size());
                          return Vec((avg - truth(s, a)).colwise().norm().transpose());
                        });
}

double epsilon_u(const TabularMdp& model_mdp, const TabularPolicy& policy, const ErrorEstimator& estimator) {
  return occupancy_measure(model_mdp, policy).expect(estimator.table());
}

MonteCarloEstimate epsilon_u_monte_carlo(const TabularMdp& model_mdp, const TabularPolicy& policy,
                                         const ErrorEstimator& estimator, int horizon, std::size_t n_rollouts,
                                         Rng& rng) {
  if (horizon < 1 || n_rollouts == 0) throw std::invalid_argument("horizon and rollout count must be positive");
  const Mat& u = estimator.table();
  std::vector<double> samples;
  samples.reserve(n_rollouts);
  for (std::size_t k = 0; k < n_rollouts; ++k) {
    std::size_t s = draw_index(model_mdp.initial_dist(), rng);
    double disc = 1.0;
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const std::size_t a = draw_index(policy.probs().row(static_cast<Index>(s)).transpose(), rng);
      total += disc * u(static_cast<Index>(s), static_cast<Index>(a));
      s = draw_index(model_mdp.next_dist(s, a), rng);
      disc *= model_mdp.discount();
    }
    samples.push_back(total);
  }
  return summarize(samples);
}

MonteCarloEstimate epsilon_u_monte_carlo(const GaussianDynamicsEnsemble& ensemble,
                                         const std::function<Vec(const Vec&, Rng&)>& policy,
                                         const std::function<Vec(Rng&)>& initial_state,
                                         const ErrorEstimator& estimator, const ContinuousEpsilonConfig& cfg,
                                         Rng& rng) {
  if (cfg.horizon < 1 || cfg.n_rollouts == 0) throw std::invalid_argument("horizon and rollout count must be positive");
  std::vector<double> samples;
  samples.reserve(cfg.n_rollouts);
  for (std::size_t k = 0; k < cfg.n_rollouts; ++k) {
    Vec s = initial_state(rng);
    double disc = 1.0;
    double total = 0.0;
    for (int t = 0; t < cfg.horizon; ++t) {
      const Vec a = policy(s, rng);
      total += disc * estimator.evaluate(s, a);
      const auto next = sample_transition(ensemble, s, a, rng);
      if (!next.next_state.allFinite()) break;
      s = next.next_state;
      disc *= cfg.discount;
    }
    samples.push_back(total);
  }
  return summarize(samples);
}

}  // namespace mopo
