#include "mopo/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace mopo {

namespace {

using Index = Eigen::Index;
using nn::Linear;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)
constexpr double kStdFloor = 1e-8;
constexpr double kImprovementNats = 1e-3;

Mat softplus(const Mat& x) {
  return (x.array().max(0.0) + (-x.array().abs()).exp().log1p()).matrix();
}

Mat sigmoid(const Mat& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

struct HeadOutputs {
  nn::Mlp::Tape tape;
  Mat hidden;
  Mat mean;
  Mat raw_logvar;
  Mat upper_clamped;  // after the max-side soft clamp
  Mat logvar;
};

HeadOutputs run_heads(const GaussianDynamicsModel& model, const Mat& inputs) {
  const auto& p = model.params();
  HeadOutputs out;
  out.hidden = p.trunk.forward(model.normalizer().apply(inputs), out.tape);
  const auto& ts = model.target_scaler();
  out.mean = (p.mean_head.forward(out.hidden).array().colwise() * ts.std.array()).matrix().colwise() + ts.mean;
  out.raw_logvar = p.logvar_head.forward(out.hidden).colwise() + (2.0 * ts.std.array().log()).matrix();
  const Mat max_b = p.max_logvar.replicate(1, inputs.cols());
  const Mat min_b = p.min_logvar.replicate(1, inputs.cols());
  out.upper_clamped = max_b - softplus(max_b - out.raw_logvar);
  out.logvar = min_b + softplus(out.upper_clamped - min_b);
  return out;
}

Mat gather(const Mat& m, const std::vector<Index>& cols) { return m(Eigen::all, cols); }

}  // namespace

nlohmann::json to_json(const DynamicsConfig& cfg) {
  return nlohmann::json{{"hidden", cfg.hidden},
                        {"activation", nn::to_string(cfg.activation)},
                        {"optimizer", cfg.optimizer == OptimizerKind::adam ? "adam" : "momentum"},
                        {"learning_rate", cfg.learning_rate},
                        {"momentum", cfg.momentum},
                        {"batch_size", cfg.batch_size},
                        {"max_epochs", cfg.max_epochs},
                        {"patience", cfg.patience},
                        {"holdout_size", cfg.holdout_size},
                        {"spectral_norm", cfg.spectral_norm},
                        {"power_iters", cfg.power_iters},
                        {"bootstrap", cfg.bootstrap},
                        {"logvar_bound_coeff", cfg.logvar_bound_coeff},
                        {"init_max_logvar", cfg.init_max_logvar},
                        {"init_min_logvar", cfg.init_min_logvar},
                        {"seed", cfg.seed}};
}

DynamicsConfig dynamics_config_from_json(const nlohmann::json& j) {
  DynamicsConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "hidden") c.hidden = v.get<std::vector<int>>();
    else if (key == "activation") c.activation = nn::activation_from_string(v.get<std::string>());
    else if (key == "optimizer") {
      const auto name = v.get<std::string>();
      if (name != "adam" && name != "momentum") throw std::invalid_argument("unknown optimizer: " + name);
      c.optimizer = name == "adam" ? OptimizerKind::adam : OptimizerKind::momentum;
    } else if (key == "learning_rate") c.learning_rate = v.get<double>();
    else if (key == "momentum") c.momentum = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "max_epochs") c.max_epochs = v.get<int>();
    else if (key == "patience") c.patience = v.get<int>();
    else if (key == "holdout_size") c.holdout_size = v.get<std::size_t>();
    else if (key == "spectral_norm") c.spectral_norm = v.get<bool>();
    else if (key == "power_iters") c.power_iters = v.get<int>();
    else if (key == "bootstrap") c.bootstrap = v.get<bool>();
    else if (key == "logvar_bound_coeff") c.logvar_bound_coeff = v.get<double>();
    else if (key == "init_max_logvar") c.init_max_logvar = v.get<double>();
    else if (key == "init_min_logvar") c.init_min_logvar = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw std::invalid_argument("unknown dynamics config key: " + key);
  }
  return c;
}

InputNormalizer InputNormalizer::fit(const Mat& inputs) {
  InputNormalizer norm;
  const double n = static_cast<double>(inputs.cols());
  norm.mean = inputs.rowwise().mean();
  const Mat centered = inputs.colwise() - norm.mean;
  norm.std = (centered.array().square().rowwise().sum() / n).sqrt().max(kStdFloor).matrix();
  return norm;
}

InputNormalizer InputNormalizer::identity(int dim) { return {Vec::Zero(dim), Vec::Ones(dim)}; }

DynamicsParams DynamicsParams::zeros_like() const {
  DynamicsParams z{trunk.zeros_like(), mean_head.zeros_like(), logvar_head.zeros_like(),
                   Vec::Zero(max_logvar.size()), Vec::Zero(min_logvar.size())};
  return z;
}

std::vector<std::span<double>> DynamicsParams::spans() {
  std::vector<std::span<double>> out;
  trunk.append_params(out);
  mean_head.append_params(out);
  logvar_head.append_params(out);
  out.emplace_back(max_logvar.data(), static_cast<std::size_t>(max_logvar.size()));
  out.emplace_back(min_logvar.data(), static_cast<std::size_t>(min_logvar.size()));
  return out;
}

GaussianDynamicsModel::GaussianDynamicsModel(int state_dim, int action_dim, const DynamicsConfig& cfg, Rng& rng)
    : state_dim_(state_dim), action_dim_(action_dim) {
  if (state_dim < 1 || action_dim < 1) throw std::invalid_argument("dynamics model needs positive dims");
  if (cfg.hidden.empty()) throw std::invalid_argument("dynamics model needs at least one hidden layer");
  std::vector<int> sizes{state_dim + action_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  params_.trunk = nn::Mlp(sizes, cfg.activation, cfg.activation, rng);
  params_.mean_head = Linear::init(cfg.hidden.back(), output_dim(), rng);
  params_.logvar_head = Linear::init(cfg.hidden.back(), output_dim(), rng);
  params_.max_logvar = Vec::Constant(output_dim(), cfg.init_max_logvar);
  params_.min_logvar = Vec::Constant(output_dim(), cfg.init_min_logvar);
  normalizer_ = InputNormalizer::identity(state_dim + action_dim);
  target_scaler_ = InputNormalizer::identity(output_dim());
}

void GaussianDynamicsModel::forward(const Mat& inputs, Mat& mean, Mat& logvar) const {
  if (inputs.rows() != state_dim_ + action_dim_) throw std::invalid_argument("dynamics input dimension mismatch");
  HeadOutputs out = run_heads(*this, inputs);
  mean = std::move(out.mean);
  logvar = std::move(out.logvar);
}

GaussianPrediction GaussianDynamicsModel::predict(const Mat& states, const Mat& actions) const {
  if (states.rows() != state_dim_ || actions.rows() != action_dim_ || states.cols() != actions.cols()) {
    throw std::invalid_argument("predict: dimension mismatch");
  }
  GaussianPrediction pred;
  Mat logvar;
  forward(stack_inputs(states, actions), pred.mean, logvar);
  pred.mean.topRows(state_dim_) += states;
  pred.var = logvar.array().exp().matrix();
  return pred;
}

GaussianPrediction GaussianDynamicsModel::predict(const Vec& state, const Vec& action) const {
  return predict(Mat(state), Mat(action));
}

void GaussianDynamicsModel::apply_spectral_norm(int power_iters, Rng& rng) {
  auto& layers = params_.trunk.layers();
  spectral_.resize(layers.size() + 1);
  for (std::size_t i = 0; i < layers.size(); ++i) nn::spectral_normalize(layers[i], spectral_[i], power_iters, true, rng);
  nn::spectral_normalize(params_.mean_head, spectral_.back(), power_iters, true, rng);
}

void GaussianDynamicsModel::zero_output_layers() {
  params_.mean_head.weight.setZero();
  params_.mean_head.bias.setZero();
  params_.logvar_head.weight.setZero();
  params_.logvar_head.bias.setZero();
  target_scaler_.mean.setZero();
}

Mat stack_inputs(const Mat& states, const Mat& actions) {
  if (states.cols() != actions.cols()) throw std::invalid_argument("state/action batch sizes differ");
  Mat x(states.rows() + actions.rows(), states.cols());
  x << states, actions;
  return x;
}

Mat dynamics_targets(const Mat& states, const Mat& next_states, const Vec& rewards) {
  Mat y(states.rows() + 1, states.cols());
  y << next_states - states, rewards.transpose();
  return y;
}

DynamicsLoss dynamics_loss(const GaussianDynamicsModel& model, const Mat& inputs, const Mat& targets,
                           double bound_coeff, DynamicsParams* grad) {
  if (inputs.cols() == 0) throw std::invalid_argument("empty batch");
  if (targets.cols() != inputs.cols() || targets.rows() != model.output_dim()) {
    throw std::invalid_argument("target shape mismatch");
  }
  const auto& p = model.params();
  HeadOutputs out = run_heads(model, inputs);
  if (!out.mean.allFinite() || !out.logvar.allFinite()) throw NumericalError("non-finite dynamics activations");
  const double n = static_cast<double>(inputs.cols());
  const Mat resid = out.mean - targets;
  const Mat inv_var = (-out.logvar.array()).exp().matrix();
  const Mat sq_scaled = resid.cwiseProduct(resid).cwiseProduct(inv_var);
  DynamicsLoss loss;
  loss.nll = 0.5 * (sq_scaled.sum() + out.logvar.sum()) / n + 0.5 * kLog2Pi * model.output_dim();
  loss.total = loss.nll + bound_coeff * (p.max_logvar.sum() - p.min_logvar.sum());
  if (grad == nullptr) return loss;

  const Mat d_mean =
      (resid.cwiseProduct(inv_var).array().colwise() * model.target_scaler().std.array()).matrix() / n;
  const Mat d_logvar = (0.5 / n) * (1.0 - sq_scaled.array()).matrix();
  const Index cols = inputs.cols();
  const Mat s_max = sigmoid(p.max_logvar.replicate(1, cols) - out.raw_logvar);
  const Mat s_min = sigmoid(out.upper_clamped - p.min_logvar.replicate(1, cols));
  const Mat d_upper = d_logvar.cwiseProduct(s_min);
  const Mat d_raw = d_upper.cwiseProduct(s_max);
  grad->max_logvar += (d_upper.array() * (1.0 - s_max.array())).rowwise().sum().matrix();
  grad->max_logvar.array() += bound_coeff;
  grad->min_logvar += (d_logvar.array() * (1.0 - s_min.array())).rowwise().sum().matrix();
  grad->min_logvar.array() -= bound_coeff;

  grad->mean_head.weight.noalias() += d_mean * out.hidden.transpose();
  grad->mean_head.bias += d_mean.rowwise().sum();
  grad->logvar_head.weight.noalias() += d_raw * out.hidden.transpose();
  grad->logvar_head.bias += d_raw.rowwise().sum();
  const Mat d_hidden = p.mean_head.weight.transpose() * d_mean + p.logvar_head.weight.transpose() * d_raw;
  p.trunk.backward(out.tape, d_hidden, grad->trunk);
  return loss;
}

double gaussian_nll(const GaussianDynamicsModel& model, const Mat& inputs, const Mat& targets) {
  return dynamics_loss(model, inputs, targets, 0.0, nullptr).nll;
}

double gaussian_nll(const GaussianDynamicsModel& model, const TransitionDataset& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  return gaussian_nll(model, stack_inputs(batch.states(), batch.actions()),
                      dynamics_targets(batch.states(), batch.next_states(), batch.rewards()));
}

GaussianDynamicsEnsemble::GaussianDynamicsEnsemble(std::vector<GaussianDynamicsModel> members,
                                                   std::vector<std::size_t> elites, std::vector<double> holdout_nll,
                                                   DynamicsConfig cfg)
    : members_(std::move(members)), elites_(std::move(elites)), holdout_nll_(std::move(holdout_nll)), config_(cfg) {
  if (members_.empty()) throw std::invalid_argument("ensemble needs members");
  if (elites_.empty()) throw std::invalid_argument("ensemble needs at least one elite");
  for (auto e : elites_) {
    if (e >= members_.size()) throw std::invalid_argument("elite index out of range");
  }
  if (holdout_nll_.size() != members_.size()) holdout_nll_.assign(members_.size(), 0.0);
}

std::vector<GaussianPrediction> GaussianDynamicsEnsemble::predict_elites(const Mat& states, const Mat& actions) const {
  std::vector<GaussianPrediction> preds;
  preds.reserve(elites_.size());
  for (auto e : elites_) preds.push_back(members_[e].predict(states, actions));
  return preds;
}

double GaussianDynamicsEnsemble::elite_holdout_nll() const {
  double total = 0.0;
  for (auto e : elites_) total += holdout_nll_[e];
  return total / static_cast<double>(elites_.size());
}

GaussianDynamicsEnsemble train_ensemble(const TransitionDataset& dataset, std::size_t n_models, std::size_t n_elites,
                                        const DynamicsConfig& cfg) {
  if (n_models == 0 || n_elites == 0 || n_elites > n_models) {
    throw std::invalid_argument("need 1 <= n_elites <= n_models");
  }
  if (dataset.size() <= cfg.holdout_size) throw std::invalid_argument("dataset must be larger than the holdout set");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1) throw std::invalid_argument("invalid dynamics training config");

  const Mat inputs = stack_inputs(dataset.states(), dataset.actions());
  const Mat targets = dynamics_targets(dataset.states(), dataset.next_states(), dataset.rewards());
  const auto n = static_cast<Index>(dataset.size());

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, 0xD47A));
  std::shuffle(perm.begin(), perm.end(), split_rng);
  const std::vector<Index> holdout(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cfg.holdout_size));
  const std::vector<Index> train(perm.begin() + static_cast<std::ptrdiff_t>(cfg.holdout_size), perm.end());
  const Mat holdout_x = gather(inputs, holdout);
  const Mat holdout_y = gather(targets, holdout);
  const InputNormalizer normalizer = InputNormalizer::fit(gather(inputs, train));
  const InputNormalizer target_scaler = InputNormalizer::fit(gather(targets, train));

  std::vector<GaussianDynamicsModel> members;
  std::vector<double> scores;
  std::vector<int> epochs_used;
  for (std::size_t m = 0; m < n_models; ++m) {
    Rng rng(derive_seed(cfg.seed, m + 1));
    GaussianDynamicsModel model(dataset.state_dim(), dataset.action_dim(), cfg, rng);
    model.normalizer() = normalizer;
    model.target_scaler() = target_scaler;
    // Bounds start relative to each target's spread, so small-scale targets are not pinned to the floor.
    const Vec log_target_var = 2.0 * target_scaler.std.array().log();
    model.params().max_logvar = (cfg.init_max_logvar + log_target_var.array()).matrix();
    model.params().min_logvar = (cfg.init_min_logvar + log_target_var.array()).matrix();
    std::vector<Index> member_train = train;
    if (cfg.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
      for (auto& i : member_train) i = train[pick(rng)];
    }
    nn::Adam adam(cfg.learning_rate);
    nn::MomentumSgd sgd(cfg.learning_rate, cfg.momentum);
    GaussianDynamicsModel best = model;
    double best_nll = gaussian_nll(model, holdout_x, holdout_y);
    int stale = 0;
    int epoch = 0;
    for (; epoch < cfg.max_epochs && stale < cfg.patience; ++epoch) {
      std::shuffle(member_train.begin(), member_train.end(), rng);
      for (std::size_t start = 0; start < member_train.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t stop = std::min(member_train.size(), start + static_cast<std::size_t>(cfg.batch_size));
        const std::vector<Index> cols(member_train.begin() + static_cast<std::ptrdiff_t>(start),
                                      member_train.begin() + static_cast<std::ptrdiff_t>(stop));
        DynamicsParams grad = model.params().zeros_like();
        const DynamicsLoss loss =
            dynamics_loss(model, gather(inputs, cols), gather(targets, cols), cfg.logvar_bound_coeff, &grad);
        if (!std::isfinite(loss.total)) {
          std::ostringstream msg;
          msg << "dynamics training diverged: member " << m << " epoch " << epoch << " loss " << loss.total;
          throw NumericalError(msg.str());
        }
        if (cfg.optimizer == OptimizerKind::adam) {
          adam.step(model.params().spans(), grad.spans());
        } else {
          sgd.step(model.params().spans(), grad.spans());
        }
        if (cfg.spectral_norm) model.apply_spectral_norm(cfg.power_iters, rng);
      }
      const double nll = gaussian_nll(model, holdout_x, holdout_y);
      if (!std::isfinite(nll)) {
        throw NumericalError("dynamics holdout NLL is non-finite for member " + std::to_string(m));
      }
      if (nll < best_nll - kImprovementNats) {
        best_nll = nll;
        best = model;
        stale = 0;
      } else {
        ++stale;
        if (nll < best_nll) {
          best_nll = nll;
          best = model;
        }
      }
    }
    members.push_back(std::move(best));
    scores.push_back(best_nll);
    epochs_used.push_back(epoch);
  }

  std::vector<std::size_t> order(n_models);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  std::vector<std::size_t> elites(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_elites));
  std::sort(elites.begin(), elites.end());
  GaussianDynamicsEnsemble ensemble(std::move(members), std::move(elites), std::move(scores), cfg);
  ensemble.epochs_trained = std::move(epochs_used);
  return ensemble;
}

SampledTransition sample_transition(const GaussianDynamicsEnsemble& ensemble, const Vec& state, const Vec& action,
                                    Rng& rng) {
  if (!ensemble.trained()) throw std::invalid_argument("ensemble has no elites");
  const auto& elites = ensemble.elite_indices();
  std::uniform_int_distribution<std::size_t> pick(0, elites.size() - 1);
  const std::size_t member = elites[pick(rng)];
  const GaussianPrediction pred = ensemble.members()[member].predict(state, action);
  std::normal_distribution<double> n01;
  Vec draw(pred.mean.rows());
  for (Index d = 0; d < draw.size(); ++d) draw(d) = pred.mean(d, 0) + std::sqrt(pred.var(d, 0)) * n01(rng);
  return {draw.head(ensemble.state_dim()), draw(ensemble.state_dim()), member};
}

void save_ensemble(const GaussianDynamicsEnsemble& ensemble, const std::filesystem::path& stem) {
  const auto& first = ensemble.members().front();
  nlohmann::json manifest{{"format", "mopo-kit-ensemble"},
                          {"version", 1},
                          {"state_dim", first.state_dim()},
                          {"action_dim", first.action_dim()},
                          {"trunk_sizes", first.params().trunk.sizes()},
                          {"activation", nn::to_string(first.params().trunk.hidden_activation())},
                          {"n_members", ensemble.members().size()},
                          {"elites", ensemble.elite_indices()},
                          {"holdout_nll", ensemble.holdout_nll()},
                          {"config", to_json(ensemble.config())},
                          {"layout",
                           {"input_mean", "input_std", "target_mean", "target_std", "trunk[i].weight (row-major out x in)", "trunk[i].bias",
                            "mean_head.weight", "mean_head.bias", "logvar_head.weight", "logvar_head.bias",
                            "max_logvar", "min_logvar"}}};
  std::ofstream bin(stem.string() + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write ensemble checkpoint");
  for (const auto& member : ensemble.members()) {
    nn::write_vec(bin, member.normalizer().mean);
    nn::write_vec(bin, member.normalizer().std);
    nn::write_vec(bin, member.target_scaler().mean);
    nn::write_vec(bin, member.target_scaler().std);
    for (const auto& layer : member.params().trunk.layers()) nn::write_linear(bin, layer);
    nn::write_linear(bin, member.params().mean_head);
    nn::write_linear(bin, member.params().logvar_head);
    nn::write_vec(bin, member.params().max_logvar);
    nn::write_vec(bin, member.params().min_logvar);
  }
  std::ofstream json_out(stem.string() + ".json", std::ios::binary);
  json_out << manifest.dump(2) << '\n';
}

GaussianDynamicsEnsemble load_ensemble(const std::filesystem::path& stem) {
  std::ifstream json_in(stem.string() + ".json");
  if (!json_in) throw std::runtime_error("missing ensemble manifest " + stem.string() + ".json");
  const auto manifest = nlohmann::json::parse(json_in);
  if (manifest.at("format") != "mopo-kit-ensemble") throw std::invalid_argument("not an ensemble manifest");
  const int ds = manifest.at("state_dim").get<int>();
  const int da = manifest.at("action_dim").get<int>();
  const auto sizes = manifest.at("trunk_sizes").get<std::vector<int>>();
  DynamicsConfig cfg = dynamics_config_from_json(manifest.at("config"));
  cfg.hidden.assign(sizes.begin() + 1, sizes.end());
  cfg.activation = nn::activation_from_string(manifest.at("activation").get<std::string>());
  const auto n_members = manifest.at("n_members").get<std::size_t>();
  std::ifstream bin(stem.string() + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("missing ensemble weights " + stem.string() + ".bin");
  std::vector<GaussianDynamicsModel> members;
  Rng unused(0);
  for (std::size_t m = 0; m < n_members; ++m) {
    GaussianDynamicsModel model(ds, da, cfg, unused);
    nn::read_vec(bin, model.normalizer().mean);
    nn::read_vec(bin, model.normalizer().std);
    nn::read_vec(bin, model.target_scaler().mean);
    nn::read_vec(bin, model.target_scaler().std);
    for (auto& layer : model.params().trunk.layers()) nn::read_linear(bin, layer);
    nn::read_linear(bin, model.params().mean_head);
    nn::read_linear(bin, model.params().logvar_head);
    nn::read_vec(bin, model.params().max_logvar);
    nn::read_vec(bin, model.params().min_logvar);
    members.push_back(std::move(model));
  }
  return GaussianDynamicsEnsemble(std::move(members), manifest.at("elites").get<std::vector<std::size_t>>(),
                                  manifest.at("holdout_nll").get<std::vector<double>>(), cfg);
}

}  // namespace mopo
