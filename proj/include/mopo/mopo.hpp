#pragma once

#include "mopo/actor_critic.hpp"
#include "mopo/datasets.hpp"
#include "mopo/dynamics.hpp"
#include "mopo/replay.hpp"
#include "mopo/uncertainty.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <ostream>

namespace mopo {

enum class PenaltyKind { max_std, mean_std, disagreement, oracle, none };
std::string to_string(PenaltyKind kind);
PenaltyKind penalty_kind_from_string(const std::string& name);

struct MopoConfig {
  int rollout_horizon = 5;          // h
  std::size_t rollout_batch = 500;  // b, rollouts started per epoch
  double penalty_coeff = 1.0;       // lambda
  PenaltyKind penalty = PenaltyKind::max_std;
  double real_fraction = 0.05;
  std::size_t batch_size = 256;
  int epochs = 30;
  int steps_per_epoch = 250;
  bool random_action_rollouts = false;
  std::uint64_t seed = 0;
  int model_retain_epochs = 5;
  std::size_t model_buffer_capacity = 0;  // 0 means b * h * retain epochs
  int eval_every = 1;
  int eval_episodes = 10;
  std::size_t ensemble_size = 7;
  std::size_t elites = 5;
  ActorCriticConfig actor_critic;
  DynamicsConfig dynamics;
};

void validate(const MopoConfig& cfg);
nlohmann::json to_json(const MopoConfig& cfg);
/// Single JSON document; unknown keys (also in nested objects) are rejected.
MopoConfig mopo_config_from_json(const nlohmann::json& j);
std::size_t model_buffer_capacity(const MopoConfig& cfg);

struct RolloutStats {
  std::size_t started = 0;
  std::size_t added = 0;
  std::size_t terminated = 0;  // stopped by the env termination predicate
  std::size_t nonfinite = 0;   // stopped by a non-finite prediction
  double penalty_mean = 0.0;
  double penalty_max = 0.0;
};

/// b independent h-step branched rollouts from dataset states. Each rollout
/// owns an RNG split from `rng`, so results do not depend on scheduling.
/// `policy == nullptr` or `cfg.random_action_rollouts` gives Unif[-1,1] actions.
RolloutStats rollout_and_penalize(const GaussianDynamicsEnsemble& ensemble, const ActorCritic* policy,
                                  const TransitionDataset& dataset, const MopoConfig& cfg,
                                  const ErrorEstimator& estimator, const TerminationFn& is_terminal,
                                  RolloutBuffer& buffer, Rng& rng);

/// ceil(real_fraction * batch_size), rounding away float noise.
std::size_t real_sample_count(std::size_t batch_size, double real_fraction);

/// Real samples first, then model samples; uniform with replacement. An empty
/// model buffer falls back to an all-real batch.
TransitionBatch mixed_batch(const TransitionDataset& env_data, const std::vector<char>& env_terminal,
                            const RolloutBuffer& model_data, std::size_t batch_size, double real_fraction, Rng& rng);

struct EvaluationResult {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> returns;
};

/**
 * The only owner of a steppable real environment in the training loop.
 * Scoring runs the deterministic (mean) action; its results are never fed
 * back as training data.
 */
class PolicyEvaluator {
 public:
  PolicyEvaluator(const ToyEnv& env, std::string reward_name, int episodes, std::uint64_t seed);
  EvaluationResult evaluate(const ActorCritic& policy) const;
  const std::string& reward_name() const { return reward_; }
  std::string task() const;

 private:
  std::unique_ptr<ToyEnv> env_;
  std::string reward_;
  int episodes_;
  std::uint64_t seed_;
};

struct MetricRow {
  int epoch = 0;
  double env_return_mean = 0.0;
  double env_return_std = 0.0;
  double penalty_mean = 0.0;
  double penalty_max = 0.0;
  std::size_t model_buffer_size = 0;
  double nll_holdout = 0.0;
};

void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& out);
void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);

struct MopoResult {
  ActorCritic policy;
  std::vector<MetricRow> history;
  std::shared_ptr<const GaussianDynamicsEnsemble> ensemble;
  double final_return_mean = 0.0;
  double final_return_std = 0.0;
  std::size_t rollouts_terminated = 0;
  std::size_t rollouts_nonfinite = 0;
};

/// Ensemble seed used by mopo_train for a run seed.
std::uint64_t ensemble_seed(std::uint64_t run_seed);

/// Trains the ensemble the run would train (honours ensemble_size / elites).
std::shared_ptr<const GaussianDynamicsEnsemble> train_run_ensemble(const MopoConfig& cfg,
                                                                   const TransitionDataset& dataset);

ErrorEstimator make_penalty(PenaltyKind kind, std::shared_ptr<const GaussianDynamicsEnsemble> ensemble,
                            const TrueNextState& oracle);

/// Full loop. A pretrained ensemble (e.g. shared across arms with the same
/// seed) skips model training; `oracle` is required for the oracle penalty.
MopoResult mopo_train(const MopoConfig& cfg, const TransitionDataset& dataset, const PolicyEvaluator& evaluator,
                      std::shared_ptr<const GaussianDynamicsEnsemble> ensemble = nullptr,
                      const TrueNextState& oracle = {});

}  // namespace mopo
