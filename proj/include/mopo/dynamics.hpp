#pragma once

#include "mopo/dataset.hpp"
#include "mopo/nn.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace mopo {

enum class OptimizerKind { momentum, adam };

struct DynamicsConfig {
  std::vector<int> hidden = {64, 64};
  nn::Activation activation = nn::Activation::swish;
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int batch_size = 256;
  int max_epochs = 200;
  int patience = 5;
  std::size_t holdout_size = 1000;
  bool spectral_norm = false;
  int power_iters = 1;
  bool bootstrap = false;
  double logvar_bound_coeff = 0.01;
  /// Initial log-variance bounds, relative to the log variance of each
  /// training target (the raw value for an unfitted model).
  double init_max_logvar = 0.5;
  double init_min_logvar = -10.0;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const DynamicsConfig& cfg);
/// Inverse of to_json; unknown keys are rejected.
DynamicsConfig dynamics_config_from_json(const nlohmann::json& j);

/// Per-dimension input standardization; std entries are floored at 1e-8.
struct InputNormalizer {
  Vec mean;
  Vec std;
  static InputNormalizer fit(const Mat& inputs);
  static InputNormalizer identity(int dim);
  Mat apply(const Mat& inputs) const { return (inputs.colwise() - mean).array().colwise() / std.array(); }
};

/// Trainable tensors of one Gaussian dynamics model. Also used as the
/// gradient container (same shapes).
struct DynamicsParams {
  nn::Mlp trunk;  // hidden layers, activation on every layer
  nn::Linear mean_head;
  nn::Linear logvar_head;
  Vec max_logvar;
  Vec min_logvar;

  DynamicsParams zeros_like() const;
  std::vector<std::span<double>> spans();
};

/// Diagonal Gaussian over (next state, reward); one column per query.
struct GaussianPrediction {
  Mat mean;  // (state_dim + 1) x N, top rows are ABSOLUTE next states
  Mat var;   // (state_dim + 1) x N
};

/**
 * Two-head Gaussian model of (state delta, reward) given (state, action).
 * The log-variance head is soft-clamped between learned bounds:
 *   lv <- max - softplus(max - lv);  lv <- min + softplus(lv - min).
 */
class GaussianDynamicsModel {
 public:
  GaussianDynamicsModel() = default;
  GaussianDynamicsModel(int state_dim, int action_dim, const DynamicsConfig& cfg, Rng& rng);

  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  int output_dim() const { return state_dim_ + 1; }

  /// Raw head outputs for stacked [s; a] inputs: delta/reward mean and clamped log-variance.
  void forward(const Mat& inputs, Mat& mean, Mat& logvar) const;

  GaussianPrediction predict(const Mat& states, const Mat& actions) const;
  GaussianPrediction predict(const Vec& state, const Vec& action) const;

  DynamicsParams& params() { return params_; }
  const DynamicsParams& params() const { return params_; }
  InputNormalizer& normalizer() { return normalizer_; }
  const InputNormalizer& normalizer() const { return normalizer_; }
  /// Per-dimension target scale: heads predict standardized targets, which
  /// are mapped back to original units before the clamps and the loss.
  InputNormalizer& target_scaler() { return target_scaler_; }
  const InputNormalizer& target_scaler() const { return target_scaler_; }

  /// Spectral normalization of trunk and mean head (never the variance head).
  void apply_spectral_norm(int power_iters, Rng& rng);

  /// Zeroes both heads; the model then predicts "no change, zero reward".
  void zero_output_layers();

 private:
  int state_dim_ = 0;
  int action_dim_ = 0;
  DynamicsParams params_;
  InputNormalizer normalizer_;
  InputNormalizer target_scaler_;
  std::vector<nn::SpectralState> spectral_;
};

Mat stack_inputs(const Mat& states, const Mat& actions);
/// Targets [s' - s; r], one column per record.
Mat dynamics_targets(const Mat& states, const Mat& next_states, const Vec& rewards);

/// Mean diagonal-Gaussian negative log-likelihood per sample, including the
/// 0.5 log(2 pi) constants. Throws on empty batches or non-finite activations.
double gaussian_nll(const GaussianDynamicsModel& model, const Mat& inputs, const Mat& targets);
double gaussian_nll(const GaussianDynamicsModel& model, const TransitionDataset& batch);

struct DynamicsLoss {
  double nll = 0.0;
  double total = 0.0;  // nll + bound regularizer
};

/// NLL plus `bound_coeff * (sum max_logvar - sum min_logvar)`. When `grad`
/// is non-null, the analytic gradient of `total` is ACCUMULATED into it.
DynamicsLoss dynamics_loss(const GaussianDynamicsModel& model, const Mat& inputs, const Mat& targets,
                           double bound_coeff, DynamicsParams* grad);

class GaussianDynamicsEnsemble {
 public:
  GaussianDynamicsEnsemble() = default;
  GaussianDynamicsEnsemble(std::vector<GaussianDynamicsModel> members, std::vector<std::size_t> elites,
                           std::vector<double> holdout_nll, DynamicsConfig cfg);

  const std::vector<GaussianDynamicsModel>& members() const { return members_; }
  const std::vector<std::size_t>& elite_indices() const { return elites_; }
  const std::vector<double>& holdout_nll() const { return holdout_nll_; }
  const DynamicsConfig& config() const { return config_; }
  std::vector<int> epochs_trained;

  bool trained() const { return !members_.empty() && !elites_.empty(); }
  int state_dim() const { return members_.front().state_dim(); }
  int action_dim() const { return members_.front().action_dim(); }

  /// One prediction per elite, in elite order.
  std::vector<GaussianPrediction> predict_elites(const Mat& states, const Mat& actions) const;

  /// Mean holdout NLL over elites.
  double elite_holdout_nll() const;

 private:
  std::vector<GaussianDynamicsModel> members_;
  std::vector<std::size_t> elites_;
  std::vector<double> holdout_nll_;
  DynamicsConfig config_;
};

/// Trains `n_models` members independently (own init seed and shuffling) and
/// keeps the `n_elites` with lowest holdout NLL. The holdout split is shared.
GaussianDynamicsEnsemble train_ensemble(const TransitionDataset& dataset, std::size_t n_models, std::size_t n_elites,
                                        const DynamicsConfig& cfg);

struct SampledTransition {
  Vec next_state;
  double reward;
  std::size_t member_used;
};

/// Elite chosen uniformly, then a diagonal Gaussian draw from it.
SampledTransition sample_transition(const GaussianDynamicsEnsemble& ensemble, const Vec& state, const Vec& action,
                                    Rng& rng);

/// Checkpoint: `<stem>.bin` (little-endian float64, layout in docs) plus
/// `<stem>.json` manifest with shapes, elites and holdout scores.
void save_ensemble(const GaussianDynamicsEnsemble& ensemble, const std::filesystem::path& stem);
GaussianDynamicsEnsemble load_ensemble(const std::filesystem::path& stem);

}  // namespace mopo
