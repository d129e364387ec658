#include "mopo/random_mdp.hpp"

namespace mopo {

Vec sample_dirichlet(const Vec& alpha, Rng& rng) {
  Vec x(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    if (!(alpha(i) > 0.0)) throw std::invalid_argument("Dirichlet parameters must be positive");
    std::gamma_distribution<double> g(alpha(i), 1.0);
    x(i) = g(rng);
  }
  double total = x.sum();
  if (!(total > 0.0)) {
    // All draws underflowed; fall back to the mean.
    x = alpha;
    total = x.sum();
  }
  x /= total;
  // Force an exact unit sum so validation at 1e-12 always passes.
  Eigen::Index largest = 0;
  x.maxCoeff(&largest);
  x(largest) += 1.0 - x.sum();
  return x;
}

TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double discount, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(n_states);
  const auto m = static_cast<Eigen::Index>(n_actions);
  Mat transition(n * m, n);
  const Vec ones = Vec::Ones(n);
  for (Eigen::Index r = 0; r < n * m; ++r) transition.row(r) = sample_dirichlet(ones, rng).transpose();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat reward(n, m);
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index a = 0; a < m; ++a) reward(s, a) = u(rng);
  Vec mu = sample_dirichlet(ones, rng);
  return TabularMdp(n_states, n_actions, std::move(transition), std::move(reward), std::move(mu), discount, 1.0);
}

TabularMdp perturb_dynamics(const TabularMdp& mdp, double concentration, Rng& rng, double floor) {
  Mat transition = mdp.transition();
  for (Eigen::Index r = 0; r < transition.rows(); ++r) {
    const Vec alpha = (concentration * transition.row(r).transpose()).array() + floor;
    transition.row(r) = sample_dirichlet(alpha, rng).transpose();
  }
  return mdp.with_transition(std::move(transition));
}

TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  Mat probs(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions));
  const Vec ones = Vec::Ones(static_cast<Eigen::Index>(n_actions));
  for (Eigen::Index s = 0; s < probs.rows(); ++s) probs.row(s) = sample_dirichlet(ones, rng).transpose();
  return TabularPolicy(std::move(probs));
}

TabularPolicy random_deterministic_policy(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n_actions - 1);
  std::vector<std::size_t> actions(n_states);
  for (auto& a : actions) a = pick(rng);
  return TabularPolicy::deterministic(actions, n_actions);
}

}  // namespace mopo
