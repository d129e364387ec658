#include "mopo/actor_critic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mopo {

namespace {

using nn::Activation;
using nn::Mlp;

Mat standard_normal(int rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

std::vector<int> net_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

// log(1 - tanh(u)^2), evaluated stably.
Mat log_one_minus_tanh_sq(const Mat& u) {
  const double log2 = std::numbers::ln2;
  return u.unaryExpr([log2](double x) { return 2.0 * (log2 - x - nn::softplus(-2.0 * x)); });
}

void check_finite(double value, const char* what, long long step) {
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "actor-critic " << what << " is not finite at update " << step;
    throw NumericalError(msg.str());
  }
}

}  // namespace

Mat stack_rows(const Mat& top, const Mat& bottom) {
  Mat out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

nlohmann::json to_json(const ActorCriticConfig& c) {
  nlohmann::json j{{"hidden", c.hidden},
                   {"activation", nn::to_string(c.activation)},
                   {"actor_lr", c.actor_lr},
                   {"critic_lr", c.critic_lr},
                   {"alpha_lr", c.alpha_lr},
                   {"discount", c.discount},
                   {"tau", c.tau},
                   {"init_alpha", c.init_alpha},
                   {"auto_alpha", c.auto_alpha},
                   {"log_std_min", c.log_std_min},
                   {"log_std_max", c.log_std_max}};
  j["target_entropy"] = c.target_entropy ? nlohmann::json(*c.target_entropy) : nlohmann::json(nullptr);
  return j;
}

ActorCriticConfig actor_critic_config_from_json(const nlohmann::json& j) {
  ActorCriticConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "hidden") c.hidden = value.get<std::vector<int>>();
    else if (key == "activation") c.activation = nn::activation_from_string(value.get<std::string>());
    else if (key == "actor_lr") c.actor_lr = value.get<double>();
    else if (key == "critic_lr") c.critic_lr = value.get<double>();
    else if (key == "alpha_lr") c.alpha_lr = value.get<double>();
    else if (key == "discount") c.discount = value.get<double>();
    else if (key == "tau") c.tau = value.get<double>();
    else if (key == "init_alpha") c.init_alpha = value.get<double>();
    else if (key == "auto_alpha") c.auto_alpha = value.get<bool>();
    else if (key == "log_std_min") c.log_std_min = value.get<double>();
    else if (key == "log_std_max") c.log_std_max = value.get<double>();
    else if (key == "target_entropy") {
      if (!value.is_null()) c.target_entropy = value.get<double>();
    } else {
      throw std::invalid_argument("unknown actor-critic config key: " + key);
    }
  }
  return c;
}

ActorCritic::ActorCritic(int state_dim, int action_dim, ActorCriticConfig cfg, Rng& rng)
    : state_dim_(state_dim), action_dim_(action_dim), cfg_(std::move(cfg)) {
  if (state_dim < 1 || action_dim < 1) throw std::invalid_argument("actor-critic dimensions must be positive");
  if (!(cfg_.discount > 0.0 && cfg_.discount < 1.0)) throw std::invalid_argument("discount must lie in (0,1)");
  if (!(cfg_.tau > 0.0 && cfg_.tau <= 1.0)) throw std::invalid_argument("tau must lie in (0,1]");
  if (!(cfg_.init_alpha >= 0.0)) throw std::invalid_argument("temperature must be nonnegative");
  if (!(cfg_.log_std_max > cfg_.log_std_min)) throw std::invalid_argument("empty log-std range");
  actor_ = Mlp(net_sizes(state_dim, cfg_.hidden, 2 * action_dim), cfg_.activation, Activation::identity, rng);
  for (int k = 0; k < 2; ++k) {
    critics_[k] = Mlp(net_sizes(state_dim + action_dim, cfg_.hidden, 1), cfg_.activation, Activation::identity, rng);
    targets_[k] = critics_[k];
    critic_opt_[k] = nn::Adam(cfg_.critic_lr);
  }
  actor_opt_ = nn::Adam(cfg_.actor_lr);
  alpha_opt_ = nn::Adam(cfg_.alpha_lr);
  // A zero temperature is represented by -inf log alpha; alpha() maps it back to 0.
  log_alpha_ = cfg_.init_alpha > 0.0 ? std::log(cfg_.init_alpha) : -std::numeric_limits<double>::infinity();
  target_entropy_ = cfg_.target_entropy.value_or(-static_cast<double>(action_dim));
}

ActorSample ActorCritic::sample(const Mat& states, const Mat& eps) const {
  if (states.rows() != state_dim_) throw std::invalid_argument("states have the wrong dimension");
  if (eps.rows() != action_dim_ || eps.cols() != states.cols()) throw std::invalid_argument("noise shape mismatch");
  ActorSample out;
  const Mat head = actor_.forward(states, out.tape);
  out.mean = head.topRows(action_dim_);
  out.raw_log_std = head.bottomRows(action_dim_);
  const double half_range = 0.5 * (cfg_.log_std_max - cfg_.log_std_min);
  out.log_std = (cfg_.log_std_min + half_range * (out.raw_log_std.array().tanh() + 1.0)).matrix();
  out.pre_tanh = out.mean + out.log_std.array().exp().matrix().cwiseProduct(eps);
  out.actions = out.pre_tanh.array().tanh().matrix();
  const Mat per_dim = (-0.5 * eps.array().square() - out.log_std.array() - 0.5 * std::log(2.0 * std::numbers::pi) -
                       log_one_minus_tanh_sq(out.pre_tanh).array())
                          .matrix();
  out.log_prob = per_dim.colwise().sum().transpose();
  return out;
}

Mat ActorCritic::act_deterministic(const Mat& states) const {
  return actor_.forward(states).topRows(action_dim_).array().tanh().matrix();
}

Mat ActorCritic::act_stochastic(const Mat& states, Rng& rng) const {
  return sample(states, standard_normal(action_dim_, states.cols(), rng)).actions;
}

Vec ActorCritic::act(const Vec& state, Rng& rng, bool deterministic) const {
  const Mat s = state;
  return deterministic ? Vec(act_deterministic(s).col(0)) : Vec(act_stochastic(s, rng).col(0));
}

Mat ActorCritic::q_values(int k, const Mat& states, const Mat& actions, bool target) const {
  return (target ? targets_[k] : critics_[k]).forward(stack_rows(states, actions));
}

Vec ActorCritic::critic_targets(const TransitionBatch& batch, const Mat& eps_next) const {
  const auto next = sample(batch.next_states, eps_next);
  const Mat q1 = q_values(0, batch.next_states, next.actions, true);
  const Mat q2 = q_values(1, batch.next_states, next.actions, true);
  const Vec q_min = q1.cwiseMin(q2).row(0).transpose();
  const double a = alpha();
  const Vec soft = a > 0.0 ? Vec(q_min - a * next.log_prob) : q_min;
  return batch.rewards + cfg_.discount * (1.0 - batch.terminal.array()).matrix().cwiseProduct(soft);
}

double ActorCritic::critic_loss(int k, const TransitionBatch& batch, const Vec& targets, Mlp* grad) const {
  const double n = static_cast<double>(batch.size());
  Mlp::Tape tape;
  const Mat q = critics_[k].forward(stack_rows(batch.states, batch.actions), tape);
  const Mat diff = q - targets.transpose();
  if (grad) critics_[k].backward(tape, diff / n, *grad);
  return 0.5 * diff.squaredNorm() / n;
}

double ActorCritic::actor_loss(const Mat& states, const Mat& eps, Mlp* grad, Vec* log_prob) const {
  const double n = static_cast<double>(states.cols());
  const auto smp = sample(states, eps);
  const Mat input = stack_rows(states, smp.actions);
  Mlp::Tape t1, t2;
  const Mat q1 = critics_[0].forward(input, t1);
  const Mat q2 = critics_[1].forward(input, t2);
  const Mat q_min = q1.cwiseMin(q2);
  const double a = alpha();
  const double loss = ((a > 0.0 ? Mat(a * smp.log_prob.transpose()) : Mat::Zero(1, states.cols())) - q_min).sum() / n;
  if (log_prob) *log_prob = smp.log_prob;
  if (!grad) return loss;

  const Mat pick1 = (q1.array() <= q2.array()).cast<double>().matrix();
  const Mat pick2 = Mat::Ones(1, states.cols()) - pick1;
  const Mat dq_da = critics_[0].input_gradient(t1, pick1).bottomRows(action_dim_) +
                    critics_[1].input_gradient(t2, pick2).bottomRows(action_dim_);
  const Mat one_minus_a2 = (1.0 - smp.actions.array().square()).matrix();
  const Mat g_u = (2.0 * a * smp.actions.array() - dq_da.array() * one_minus_a2.array()).matrix();
  const Mat sigma = smp.log_std.array().exp().matrix();
  const Mat d_log_std = (-a + g_u.array() * sigma.array() * eps.array()).matrix();
  const double half_range = 0.5 * (cfg_.log_std_max - cfg_.log_std_min);
  const Mat d_raw = (d_log_std.array() * half_range * (1.0 - smp.raw_log_std.array().tanh().square())).matrix();
  actor_.backward(smp.tape, stack_rows(g_u, d_raw) / n, *grad);
  return loss;
}

ActorCriticLosses ActorCritic::update(const TransitionBatch& batch, Rng& rng) {
  if (batch.size() == 0) throw std::invalid_argument("actor-critic update needs a nonempty batch");
  const Mat eps_next = standard_normal(action_dim_, batch.size(), rng);
  const Mat eps = standard_normal(action_dim_, batch.size(), rng);
  ActorCriticLosses out;

  const Vec y = critic_targets(batch, eps_next);
  for (int k = 0; k < 2; ++k) {
    Mlp g = critics_[k].zeros_like();
    const double loss = critic_loss(k, batch, y, &g);
    check_finite(loss, "critic loss", updates_);
    (k == 0 ? out.critic1 : out.critic2) = loss;
    critic_opt_[k].step(nn::params_of(critics_[k]), nn::params_of(g));
  }

  Mlp g = actor_.zeros_like();
  Vec log_prob;
  out.actor = actor_loss(batch.states, eps, &g, &log_prob);
  check_finite(out.actor, "actor loss", updates_);
  actor_opt_.step(nn::params_of(actor_), nn::params_of(g));
  out.log_prob_mean = log_prob.mean();

  if (cfg_.auto_alpha && std::isfinite(log_alpha_)) {
    const double drive = out.log_prob_mean + target_entropy_;
    out.alpha_loss = -log_alpha_ * drive;
    double grad_la = -drive;
    alpha_opt_.step({std::span<double>(&log_alpha_, 1)}, {std::span<double>(&grad_la, 1)});
    check_finite(log_alpha_, "temperature", updates_);
  }
  out.alpha = alpha();

  for (int k = 0; k < 2; ++k) targets_[k].soft_update_from(critics_[k], cfg_.tau);
  ++updates_;
  return out;
}

void ActorCritic::save(const std::filesystem::path& stem) const {
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::filesystem::path meta = stem;
  meta += ".json";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + bin.string());
  auto write_net = [&](const Mlp& net) {
    for (const auto& layer : net.layers()) nn::write_linear(out, layer);
  };
  write_net(actor_);
  for (int k = 0; k < 2; ++k) write_net(critics_[k]);
  for (int k = 0; k < 2; ++k) write_net(targets_[k]);
  nn::write_f64(out, log_alpha_);
  nlohmann::json j{{"format", "mopo-kit-actor-critic"},
                   {"version", 1},
                   {"state_dim", state_dim_},
                   {"action_dim", action_dim_},
                   {"updates", updates_},
                   {"config", to_json(cfg_)},
                   {"layout", {"actor", "critic0", "critic1", "target0", "target1", "log_alpha"}}};
  std::ofstream(meta) << j.dump(2) << "\n";
}

ActorCritic ActorCritic::load(const std::filesystem::path& stem) {
  std::filesystem::path bin = stem;
  bin += ".bin";
  std::filesystem::path meta = stem;
  meta += ".json";
  std::ifstream mj(meta);
  if (!mj) throw std::runtime_error("cannot read " + meta.string());
  const auto j = nlohmann::json::parse(mj);
  if (j.at("format") != "mopo-kit-actor-critic" || j.at("version") != 1) {
    throw std::runtime_error("unsupported actor-critic checkpoint");
  }
  Rng rng(0);
  ActorCritic ac(j.at("state_dim").get<int>(), j.at("action_dim").get<int>(),
                 actor_critic_config_from_json(j.at("config")), rng);
  ac.updates_ = j.at("updates").get<long long>();
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + bin.string());
  auto read_net = [&](Mlp& net) {
    for (auto& layer : net.layers()) nn::read_linear(in, layer);
  };
  read_net(ac.actor_);
  for (int k = 0; k < 2; ++k) read_net(ac.critics_[k]);
  for (int k = 0; k < 2; ++k) read_net(ac.targets_[k]);
  ac.log_alpha_ = nn::read_f64(in);
  if (!in) throw std::runtime_error("truncated actor-critic checkpoint " + bin.string());
  return ac;
}

}  // namespace mopo
