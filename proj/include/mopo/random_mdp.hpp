#pragma once

#include "mopo/mdp.hpp"

namespace mopo {

/// Dirichlet(alpha) sample; alpha entries must be positive.
Vec sample_dirichlet(const Vec& alpha, Rng& rng);

/// Random MDP: Dirichlet(1) next-state rows, rewards uniform in [-1, 1]
/// (r_max stored as 1), Dirichlet(1) initial distribution.
TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double discount, Rng& rng);

/// Model dynamics drawn row-wise as Dirichlet(concentration * T(s,a) + floor).
/// Large concentration keeps T-hat close to T; small concentration spreads it.
TabularMdp perturb_dynamics(const TabularMdp& mdp, double concentration, Rng& rng, double floor = 0.05);

/// Random stochastic policy with Dirichlet(1) rows.
TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng);

/// Uniformly random deterministic policy.
TabularPolicy random_deterministic_policy(std::size_t n_states, std::size_t n_actions, Rng& rng);

}  // namespace mopo
