#include "mopo/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mopo {

namespace {

std::vector<std::size_t> actions_of(const TabularPolicy& pi) {
  std::vector<std::size_t> out(pi.n_states());
  for (std::size_t s = 0; s < pi.n_states(); ++s) out[s] = pi.action(s);
  return out;
}

TabularMdp penalize(const TabularMdp& base, const ErrorEstimator& penalty, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("penalty coefficient must be nonnegative");
  const Mat& u = penalty.table();
  if (u.rows() != base.reward().rows() || u.cols() != base.reward().cols()) {
    throw std::invalid_argument("estimator table does not match the model MDP");
  }
  return base.with_reward(base.reward() - lambda * u);
}

}  // namespace

PenalizedModelMdp::PenalizedModelMdp(TabularMdp base, ErrorEstimator penalty, double lambda)
    : base_(std::move(base)), penalty_(std::move(penalty)), lambda_(lambda), mdp_(penalize(base_, penalty_, lambda)) {}

PenalizedModelMdp build_penalized(const TabularMdp& model_mdp, const ErrorEstimator& estimator, double lambda) {
  return PenalizedModelMdp(model_mdp, estimator, lambda);
}

TabularPolicy mopo_solve(const PenalizedModelMdp& penalized, double tol) { return optimal_policy(penalized.mdp(), tol); }

std::size_t pi_delta_index(const std::vector<double>& true_returns, const std::vector<double>& eps_u, double delta) {
  if (true_returns.empty() || true_returns.size() != eps_u.size()) {
    throw std::invalid_argument("need one return and one eps_u per candidate");
  }
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < eps_u.size(); ++i) {
    if (eps_u[i] > delta) continue;
    if (!best || true_returns[i] > true_returns[*best]) best = i;
  }
  if (!best) throw std::invalid_argument("no candidate policy has eps_u <= delta");
  return *best;
}

TabularPolicy pi_delta(const TabularMdp& true_mdp, const std::vector<TabularPolicy>& candidates,
                       const ErrorEstimator& estimator, const TabularMdp& model_mdp, double delta) {
  if (candidates.empty()) throw std::invalid_argument("no candidate policies");
  std::vector<double> returns, eps;
  for (const auto& pi : candidates) {
    returns.push_back(expected_return(true_mdp, pi));
    eps.push_back(epsilon_u(model_mdp, pi, estimator));
  }
  return candidates[pi_delta_index(returns, eps, delta)];
}

std::vector<double> delta_grid(double delta_min, double delta_max, std::size_t n_points) {
  if (n_points < 2) throw std::invalid_argument("delta grid needs at least two points");
  if (!(delta_max >= delta_min) || delta_min < 0.0) throw std::invalid_argument("invalid delta range");
  std::vector<double> grid{delta_min};
  if (delta_max == delta_min) {
    grid.resize(n_points, delta_min);
    return grid;
  }
  const double lo = std::max(delta_min, 1e-6 * delta_max);
  const double step = std::log(delta_max / lo) / static_cast<double>(n_points - 2);
  for (std::size_t k = 0; k + 1 < n_points; ++k) grid.push_back(lo * std::exp(step * static_cast<double>(k)));
  grid.back() = delta_max;
  return grid;
}

double TheoremCertificate::min_slack() const {
  return std::min({supremum_min_slack, delta_grid_min_slack, behavior_corollary_slack});
}

TheoremCertificate theorem_certificate(const TabularMdp& true_mdp, const TabularMdp& model_mdp,
                                       const ErrorEstimator& estimator, double lambda,
                                       const CertificateOptions& options) {
  const std::size_t S = true_mdp.n_states();
  const std::size_t A = true_mdp.n_actions();
  if (!true_mdp.shares_reward_structure(model_mdp)) {
    throw std::invalid_argument("true and model MDP must share reward, initial distribution and discount");
  }
  const auto count = count_deterministic_policies(S, A, options.max_policies);
  if (!count) {
    throw std::length_error("A^S deterministic policies exceed the enumeration cap of " +
                            std::to_string(options.max_policies));
  }
  TheoremCertificate cert;
  cert.lambda = lambda;
  cert.c = true_mdp.r_max() / (1.0 - true_mdp.discount());
  if (lambda < true_mdp.discount() * cert.c * (1.0 - 1e-12)) {
    throw std::invalid_argument("the guarantee needs lambda >= gamma * c");
  }
  const auto penalized = build_penalized(model_mdp, estimator, lambda);
  const TabularPolicy pi_hat = mopo_solve(penalized, options.tol);
  cert.pi_hat_actions = actions_of(pi_hat);
  cert.pi_hat_true_return = expected_return(true_mdp, pi_hat);
  cert.optimal_true_return = expected_return(true_mdp, optimal_policy(true_mdp, options.tol));

  std::vector<double> returns, eps;
  cert.supremum_min_slack = std::numeric_limits<double>::infinity();
  cert.two_sided_min_slack = std::numeric_limits<double>::infinity();
  cert.conservatism_min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < *count; ++i) {
    const TabularPolicy pi = deterministic_policy_at(i, S, A);
    PolicyCertificate pc;
    pc.index = i;
    pc.actions = actions_of(pi);
    pc.true_return = expected_return(true_mdp, pi);
    pc.model_return = expected_return(model_mdp, pi);
    pc.penalized_return = expected_return(penalized.mdp(), pi);
    pc.eps_u = epsilon_u(model_mdp, pi, estimator);
    pc.supremum_slack = cert.pi_hat_true_return - (pc.true_return - 2.0 * lambda * pc.eps_u);
    pc.two_sided_slack = lambda * pc.eps_u - std::abs(pc.model_return - pc.true_return);
    pc.conservatism_slack = pc.true_return - pc.penalized_return;
    cert.supremum_min_slack = std::min(cert.supremum_min_slack, pc.supremum_slack);
    cert.two_sided_min_slack = std::min(cert.two_sided_min_slack, pc.two_sided_slack);
    cert.conservatism_min_slack = std::min(cert.conservatism_min_slack, pc.conservatism_slack);
    returns.push_back(pc.true_return);
    eps.push_back(pc.eps_u);
    cert.per_policy.push_back(std::move(pc));
  }

  cert.delta_min = *std::min_element(eps.begin(), eps.end());
  cert.delta_max = *std::max_element(eps.begin(), eps.end());
  cert.deltas = delta_grid(cert.delta_min, cert.delta_max);
  cert.delta_grid_min_slack = std::numeric_limits<double>::infinity();
  for (double delta : cert.deltas) {
    const double r = returns[pi_delta_index(returns, eps, delta)];
    const double slack = cert.pi_hat_true_return - (r - 2.0 * lambda * delta);
    cert.pi_delta_returns.push_back(r);
    cert.delta_grid_slacks.push_back(slack);
    cert.delta_grid_min_slack = std::min(cert.delta_grid_min_slack, slack);
  }

  const TabularPolicy behavior = options.behavior ? *options.behavior : TabularPolicy::uniform(S, A);
  cert.behavior_corollary_slack = cert.pi_hat_true_return - (expected_return(true_mdp, behavior) -
                                                             2.0 * lambda * epsilon_u(model_mdp, behavior, estimator));
  return cert;
}

nlohmann::json to_json(const TheoremCertificate& cert) {
  nlohmann::json per_policy = nlohmann::json::array();
  for (const auto& pc : cert.per_policy) {
    per_policy.push_back({{"index", pc.index},
                          {"actions", pc.actions},
                          {"true_return", pc.true_return},
                          {"model_return", pc.model_return},
                          {"penalized_return", pc.penalized_return},
                          {"eps_u", pc.eps_u},
                          {"supremum_slack", pc.supremum_slack},
                          {"two_sided_slack", pc.two_sided_slack},
                          {"conservatism_slack", pc.conservatism_slack}});
  }
  return nlohmann::json{{"lambda", cert.lambda},
                        {"c", cert.c},
                        {"delta_min", cert.delta_min},
                        {"delta_max", cert.delta_max},
                        {"pi_hat", cert.pi_hat_actions},
                        {"pi_hat_true_return", cert.pi_hat_true_return},
                        {"optimal_true_return", cert.optimal_true_return},
                        {"supremum_min_slack", cert.supremum_min_slack},
                        {"delta_grid_min_slack", cert.delta_grid_min_slack},
                        {"behavior_corollary_slack", cert.behavior_corollary_slack},
                        {"two_sided_min_slack", cert.two_sided_min_slack},
                        {"conservatism_min_slack", cert.conservatism_min_slack},
                        {"delta_grid", cert.deltas},
                        {"delta_grid_slacks", cert.delta_grid_slacks},
                        {"per_policy", per_policy}};
}

}  // namespace mopo
