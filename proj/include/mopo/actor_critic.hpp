#pragma once

#include "mopo/nn.hpp"
#include "mopo/replay.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace mopo {

struct ActorCriticConfig {
  std::vector<int> hidden{64, 64};
  nn::Activation activation = nn::Activation::relu;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double alpha_lr = 1e-3;
  double discount = 0.99;
  double tau = 0.005;  // polyak rate of the target critics
  double init_alpha = 0.1;
  bool auto_alpha = true;
  std::optional<double> target_entropy;  // defaults to -action_dim
  double log_std_min = -5.0;
  double log_std_max = 2.0;
};

nlohmann::json to_json(const ActorCriticConfig& cfg);
ActorCriticConfig actor_critic_config_from_json(const nlohmann::json& j);

struct ActorCriticLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double log_prob_mean = 0.0;
};

/// Reparameterized actions a = tanh(mu + sigma * eps) and their log densities.
struct ActorSample {
  Mat actions;
  Vec log_prob;
  Mat mean;
  Mat log_std;
  Mat raw_log_std;
  Mat pre_tanh;
  nn::Mlp::Tape tape;
};

/**
 * Soft actor-critic with a squashed-Gaussian actor, twin critics with polyak
 * targets and an optional automatically tuned temperature. All gradients are
 * analytic.
 */
class ActorCritic {
 public:
  ActorCritic(int state_dim, int action_dim, ActorCriticConfig cfg, Rng& rng);

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  const ActorCriticConfig& config() const { return cfg_; }
  double alpha() const { return std::exp(log_alpha_); }
  double target_entropy() const { return target_entropy_; }
  long long updates() const { return updates_; }

  /// tanh of the mean action; one column per state.
  Mat act_deterministic(const Mat& states) const;
  Mat act_stochastic(const Mat& states, Rng& rng) const;
  Vec act(const Vec& state, Rng& rng, bool deterministic) const;

  ActorSample sample(const Mat& states, const Mat& eps) const;

  /// Bellman targets r + gamma (1 - terminal)(min target Q - alpha log pi).
  Vec critic_targets(const TransitionBatch& batch, const Mat& eps_next) const;
  /// 0.5 mean (Q_k - y)^2 for critic k in {0, 1}; gradients accumulate.
  double critic_loss(int k, const TransitionBatch& batch, const Vec& targets, nn::Mlp* grad) const;
  /// mean(alpha log pi - min_k Q_k) at reparameterized actions.
  double actor_loss(const Mat& states, const Mat& eps, nn::Mlp* grad, Vec* log_prob = nullptr) const;

  /// One full update: critics, actor, temperature, then targets.
  ActorCriticLosses update(const TransitionBatch& batch, Rng& rng);

  nn::Mlp& actor() { return actor_; }
  const nn::Mlp& actor() const { return actor_; }
  nn::Mlp& critic(int k) { return critics_[k]; }
  const nn::Mlp& critic(int k) const { return critics_[k]; }
  const nn::Mlp& target_critic(int k) const { return targets_[k]; }

  void save(const std::filesystem::path& stem) const;
  static ActorCritic load(const std::filesystem::path& stem);

 private:
  Mat q_values(int k, const Mat& states, const Mat& actions, bool target) const;

  int state_dim_ = 0;
  int action_dim_ = 0;
  ActorCriticConfig cfg_;
  nn::Mlp actor_;
  nn::Mlp critics_[2];
  nn::Mlp targets_[2];
  double log_alpha_ = 0.0;
  double target_entropy_ = 0.0;
  long long updates_ = 0;
  nn::Adam actor_opt_{1e-3};
  nn::Adam critic_opt_[2]{nn::Adam{1e-3}, nn::Adam{1e-3}};
  nn::Adam alpha_opt_{1e-3};
};

Mat stack_rows(const Mat& top, const Mat& bottom);

}  // namespace mopo
