#include "mopo/mopo.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace mopo {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

constexpr std::uint64_t kEnsembleStream = 0x6d6f64656cULL;
constexpr std::uint64_t kPolicyStream = 0x706f6c6963ULL;
constexpr std::uint64_t kRolloutStream = 0x726f6c6cULL;
constexpr std::uint64_t kUpdateStream = 0x757064ULL;

}  // namespace

std::string to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::max_std: return "max-std";
    case PenaltyKind::mean_std: return "mean-std";
    case PenaltyKind::disagreement: return "disagreement";
    case PenaltyKind::oracle: return "oracle";
    case PenaltyKind::none: return "none";
  }
  throw std::logic_error("unhandled penalty kind");
}

PenaltyKind penalty_kind_from_string(const std::string& name) {
  for (auto k : {PenaltyKind::max_std, PenaltyKind::mean_std, PenaltyKind::disagreement, PenaltyKind::oracle,
                 PenaltyKind::none}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown penalty kind: " + name);
}

void validate(const MopoConfig& c) {
  if (c.rollout_horizon < 1) throw std::invalid_argument("rollout horizon h must be at least 1");
  if (c.rollout_batch < 1) throw std::invalid_argument("rollout batch b must be at least 1");
  if (!(c.penalty_coeff >= 0.0) || !std::isfinite(c.penalty_coeff))
    throw std::invalid_argument("penalty coefficient must be finite and nonnegative");
  if (c.batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (!(c.real_fraction >= 0.0 && c.real_fraction <= 1.0)) throw std::invalid_argument("real fraction must lie in [0,1]");
  if (c.epochs < 0 || c.steps_per_epoch < 0) throw std::invalid_argument("epochs and steps per epoch must be nonnegative");
  if (c.model_retain_epochs < 1) throw std::invalid_argument("model retain epochs must be at least 1");
  if (c.eval_every < 1) throw std::invalid_argument("eval_every must be at least 1");
  if (c.eval_episodes < 1) throw std::invalid_argument("need at least one evaluation episode");
  if (c.ensemble_size < 1 || c.elites < 1 || c.elites > c.ensemble_size)
    throw std::invalid_argument("need 1 <= elites <= ensemble size");
}

nlohmann::json to_json(const MopoConfig& c) {
  return {{"rollout_horizon", c.rollout_horizon},
          {"rollout_batch", c.rollout_batch},
          {"penalty_coeff", c.penalty_coeff},
          {"penalty", to_string(c.penalty)},
          {"real_fraction", c.real_fraction},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"steps_per_epoch", c.steps_per_epoch},
          {"random_action_rollouts", c.random_action_rollouts},
          {"seed", c.seed},
          {"model_retain_epochs", c.model_retain_epochs},
          {"model_buffer_capacity", c.model_buffer_capacity},
          {"eval_every", c.eval_every},
          {"eval_episodes", c.eval_episodes},
          {"ensemble_size", c.ensemble_size},
          {"elites", c.elites},
          {"actor_critic", to_json(c.actor_critic)},
          {"dynamics", to_json(c.dynamics)}};
}

MopoConfig mopo_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  MopoConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "rollout_horizon") c.rollout_horizon = v.get<int>();
    else if (key == "rollout_batch") c.rollout_batch = v.get<std::size_t>();
    else if (key == "penalty_coeff") c.penalty_coeff = v.get<double>();
    else if (key == "penalty") c.penalty = penalty_kind_from_string(v.get<std::string>());
    else if (key == "real_fraction") c.real_fraction = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "steps_per_epoch") c.steps_per_epoch = v.get<int>();
    else if (key == "random_action_rollouts") c.random_action_rollouts = v.get<bool>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "model_retain_epochs") c.model_retain_epochs = v.get<int>();
    else if (key == "model_buffer_capacity") c.model_buffer_capacity = v.get<std::size_t>();
    else if (key == "eval_every") c.eval_every = v.get<int>();
    else if (key == "eval_episodes") c.eval_episodes = v.get<int>();
    else if (key == "ensemble_size") c.ensemble_size = v.get<std::size_t>();
    else if (key == "elites") c.elites = v.get<std::size_t>();
    else if (key == "actor_critic") c.actor_critic = actor_critic_config_from_json(v);
    else if (key == "dynamics") c.dynamics = dynamics_config_from_json(v);
    else throw std::invalid_argument("unknown config key: " + key);
  }
  validate(c);
  return c;
}

std::size_t model_buffer_capacity(const MopoConfig& c) {
  if (c.model_buffer_capacity > 0) return c.model_buffer_capacity;
  return c.rollout_batch * static_cast<std::size_t>(c.rollout_horizon) * static_cast<std::size_t>(c.model_retain_epochs);
}

RolloutStats rollout_and_penalize(const GaussianDynamicsEnsemble& ensemble, const ActorCritic* policy,
                                  const TransitionDataset& dataset, const MopoConfig& cfg,
                                  const ErrorEstimator& estimator, const TerminationFn& is_terminal,
                                  RolloutBuffer& buffer, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("rollouts need a nonempty dataset");
  if (!ensemble.trained()) throw std::logic_error("rollouts need a trained ensemble");
  validate(cfg);
  const int ds = dataset.state_dim();
  const int da = dataset.action_dim();
  if (ensemble.state_dim() != ds || ensemble.action_dim() != da)
    throw std::invalid_argument("ensemble and dataset dimensions differ");
  const bool random_actions = policy == nullptr || cfg.random_action_rollouts;

  const std::size_t b = cfg.rollout_batch;
  const std::uint64_t base = rng();
  std::vector<Rng> streams;
  streams.reserve(b);
  for (std::size_t j = 0; j < b; ++j) streams.emplace_back(derive_seed(base, j));

  Mat states(ds, idx(b));
  std::uniform_int_distribution<std::size_t> pick_start(0, dataset.size() - 1);
  for (std::size_t j = 0; j < b; ++j) states.col(idx(j)) = dataset.states().col(idx(pick_start(streams[j])));

  std::vector<std::size_t> active(b);
  for (std::size_t j = 0; j < b; ++j) active[j] = j;

  RolloutStats stats;
  stats.started = b;
  double penalty_sum = 0.0;
  const auto& elites = ensemble.elite_indices();
  std::uniform_int_distribution<std::size_t> pick_elite(0, elites.size() - 1);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  // Normal distributions cache a spare draw, so each stream keeps its own.
  std::vector<std::normal_distribution<double>> normal(b);

  for (int t = 0; t < cfg.rollout_horizon && !active.empty(); ++t) {
    const Index n = idx(active.size());
    Mat s(ds, n);
    for (Index k = 0; k < n; ++k) s.col(k) = states.col(idx(active[static_cast<std::size_t>(k)]));

    Mat a(da, n);
    if (random_actions) {
      for (Index k = 0; k < n; ++k)
        for (int d = 0; d < da; ++d) a(d, k) = unif(streams[active[static_cast<std::size_t>(k)]]);
    } else {
      Mat eps(da, n);
      for (Index k = 0; k < n; ++k)
        for (int d = 0; d < da; ++d) {
          const std::size_t j = active[static_cast<std::size_t>(k)];
          eps(d, k) = normal[j](streams[j]);
        }
      a = policy->sample(s, eps).actions;
    }

    const auto preds = ensemble.predict_elites(s, a);
    const Vec u = estimator.evaluate(s, a);

    std::vector<std::size_t> still;
    for (Index k = 0; k < n; ++k) {
      const std::size_t j = active[static_cast<std::size_t>(k)];
      Rng& r = streams[j];
      const std::size_t e = pick_elite(r);
      Vec out = preds[e].mean.col(k);
      for (Index d = 0; d < out.size(); ++d) out(d) += std::sqrt(preds[e].var(d, k)) * normal[j](r);
      if (!out.allFinite() || !std::isfinite(u(k))) {
        ++stats.nonfinite;
        continue;
      }
      const Vec next = out.head(ds);
      const double raw = out(ds);
      const double penalized = raw - cfg.penalty_coeff * u(k);
      const bool terminal = is_terminal ? is_terminal(next) : false;
      buffer.add(s.col(k), a.col(k), penalized, next, terminal,
                 RolloutAudit{raw, u(k), static_cast<int>(elites[e])});
      ++stats.added;
      penalty_sum += u(k);
      stats.penalty_max = std::max(stats.penalty_max, u(k));
      if (terminal) {
        ++stats.terminated;
        continue;
      }
      states.col(idx(j)) = next;
      still.push_back(j);
    }
    active.swap(still);
  }
  stats.penalty_mean = stats.added > 0 ? penalty_sum / static_cast<double>(stats.added) : 0.0;
  return stats;
}

std::size_t real_sample_count(std::size_t batch_size, double real_fraction) {
  const double raw = real_fraction * static_cast<double>(batch_size);
  const auto n = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::min(n, batch_size);
}

TransitionBatch mixed_batch(const TransitionDataset& env_data, const std::vector<char>& env_terminal,
                            const RolloutBuffer& model_data, std::size_t batch_size, double real_fraction, Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(real_fraction >= 0.0 && real_fraction <= 1.0)) throw std::invalid_argument("real fraction must lie in [0,1]");
  std::size_t n_real = real_sample_count(batch_size, real_fraction);
  if (model_data.empty() && n_real < batch_size) {
    log_warning("model buffer is empty; using an all-real batch");
    n_real = batch_size;
  }
  const std::size_t n_model = batch_size - n_real;
  TransitionBatch real;
  if (n_real > 0) real = sample_dataset(env_data, n_real, rng, env_terminal);
  if (n_model == 0) return real;
  return concat_batches(real, model_data.sample(n_model, rng));
}

PolicyEvaluator::PolicyEvaluator(const ToyEnv& env, std::string reward_name, int episodes, std::uint64_t seed)
    : env_(env.clone()), reward_(std::move(reward_name)), episodes_(episodes), seed_(seed) {
  if (episodes < 1) throw std::invalid_argument("need at least one evaluation episode");
  if (reward_.empty()) reward_ = env_->default_reward();
  env_->set_reward(reward_);
}

EvaluationResult PolicyEvaluator::evaluate(const ActorCritic& policy) const {
  if (policy.state_dim() != env_->state_dim() || policy.action_dim() != env_->action_dim())
    throw std::invalid_argument("policy does not match the evaluation environment");
  const ActionPolicy act = [&policy](const Vec& s, Rng& rng) { return policy.act(s, rng, true); };
  const auto stats = run_episodes(*env_, reward_, act, episodes_, seed_);
  return {stats.mean, stats.std, stats.returns};
}

std::string PolicyEvaluator::task() const { return task_key(env_->name(), reward_); }

void write_metrics_csv(const std::vector<MetricRow>& rows, std::ostream& out) {
  out << "epoch,env_return_mean,env_return_std,penalty_mean,penalty_max,model_buffer_size,nll_holdout\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.env_return_mean << ',' << r.env_return_std << ',' << r.penalty_mean << ','
        << r.penalty_max << ',' << r.model_buffer_size << ',' << r.nll_holdout << '\n';
  }
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_metrics_csv(rows, out);
}

std::uint64_t ensemble_seed(std::uint64_t run_seed) { return derive_seed(run_seed, kEnsembleStream); }

std::shared_ptr<const GaussianDynamicsEnsemble> train_run_ensemble(const MopoConfig& cfg,
                                                                   const TransitionDataset& dataset) {
  DynamicsConfig dc = cfg.dynamics;
  dc.seed = ensemble_seed(cfg.seed);
  return std::make_shared<const GaussianDynamicsEnsemble>(train_ensemble(dataset, cfg.ensemble_size, cfg.elites, dc));
}

ErrorEstimator make_penalty(PenaltyKind kind, std::shared_ptr<const GaussianDynamicsEnsemble> ensemble,
                            const TrueNextState& oracle) {
  switch (kind) {
    case PenaltyKind::max_std: return max_std(std::move(ensemble));
    case PenaltyKind::mean_std: return mean_std(std::move(ensemble));
    case PenaltyKind::disagreement: return disagreement(std::move(ensemble));
    case PenaltyKind::oracle:
      if (!oracle) throw std::invalid_argument("the oracle penalty needs the true dynamics");
      return oracle_true_pred_error(oracle, std::move(ensemble));
    case PenaltyKind::none: return zero_estimator();
  }
  throw std::logic_error("unhandled penalty kind");
}

MopoResult mopo_train(const MopoConfig& cfg, const TransitionDataset& dataset, const PolicyEvaluator& evaluator,
                      std::shared_ptr<const GaussianDynamicsEnsemble> ensemble, const TrueNextState& oracle) {
  validate(cfg);
  if (dataset.empty()) throw std::invalid_argument("training needs a nonempty dataset");
  if (!ensemble) ensemble = train_run_ensemble(cfg, dataset);
  if (!ensemble->trained()) throw std::logic_error("ensemble is not trained");

  const ErrorEstimator estimator = make_penalty(cfg.penalty, ensemble, oracle);
  const TerminationFn is_terminal = termination_function(dataset.meta().env_name);
  const std::vector<char> env_terminal = terminal_flags(dataset);

  Rng init_rng(derive_seed(cfg.seed, kPolicyStream));
  MopoResult result{ActorCritic(dataset.state_dim(), dataset.action_dim(), cfg.actor_critic, init_rng), {}, ensemble};
  RolloutBuffer buffer(dataset.state_dim(), dataset.action_dim(), model_buffer_capacity(cfg));
  Rng rollout_rng(derive_seed(cfg.seed, kRolloutStream));
  Rng update_rng(derive_seed(cfg.seed, kUpdateStream));
  const double nll = ensemble->elite_holdout_nll();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto stats = rollout_and_penalize(*ensemble, &result.policy, dataset, cfg, estimator, is_terminal, buffer,
                                            rollout_rng);
    result.rollouts_terminated += stats.terminated;
    result.rollouts_nonfinite += stats.nonfinite;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      const auto batch = mixed_batch(dataset, env_terminal, buffer, cfg.batch_size, cfg.real_fraction, update_rng);
      result.policy.update(batch, update_rng);
    }
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      const auto eval = evaluator.evaluate(result.policy);
      result.history.push_back(
          {epoch, eval.mean, eval.std, stats.penalty_mean, stats.penalty_max, buffer.size(), nll});
      result.final_return_mean = eval.mean;
      result.final_return_std = eval.std;
    }
  }
  return result;
}

}  // namespace mopo
