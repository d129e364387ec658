#include "mopo/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace mopo::nn {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::swish:
      return "swish";
  }
  throw std::invalid_argument("unknown activation");
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "swish") return Activation::swish;
  throw std::invalid_argument("unknown activation: " + name);
}

Mat activate(const Mat& pre, Activation act) {
  switch (act) {
    case Activation::identity:
      return pre;
    case Activation::relu:
      return pre.cwiseMax(0.0);
    case Activation::tanh:
      return pre.array().tanh().matrix();
    case Activation::swish:
      return (pre.array() / (1.0 + (-pre.array()).exp())).matrix();
  }
  throw std::invalid_argument("unknown activation");
}

Mat activation_derivative(const Mat& pre, Activation act) {
  switch (act) {
    case Activation::identity:
      return Mat::Ones(pre.rows(), pre.cols());
    case Activation::relu:
      return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: {
      const auto t = pre.array().tanh();
      return (1.0 - t * t).matrix();
    }
    case Activation::swish: {
      const auto s = 1.0 / (1.0 + (-pre.array()).exp());
      return (s + pre.array() * s * (1.0 - s)).matrix();
    }
  }
  throw std::invalid_argument("unknown activation");
}

Linear::Linear(int in, int out) : weight(Mat::Zero(out, in)), bias(Vec::Zero(out)) {}

Linear Linear::init(int in, int out, Rng& rng) {
  Linear layer(in, out);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = u(rng);
  for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = u(rng);
  return layer;
}

void Linear::append_params(std::vector<std::span<double>>& out) {
  out.emplace_back(weight.data(), static_cast<std::size_t>(weight.size()));
  out.emplace_back(bias.data(), static_cast<std::size_t>(bias.size()));
}

double spectral_normalize(Linear& layer, SpectralState& state, int n_power_iters, bool enabled, Rng& rng) {
  if (n_power_iters < 1) throw std::invalid_argument("spectral normalization needs at least one power iteration");
  Mat& w = layer.weight;
  if (w.size() == 0 || w.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  if (state.u.size() != w.rows()) {
    std::normal_distribution<double> n01;
    state.u.resize(w.rows());
    for (Eigen::Index i = 0; i < state.u.size(); ++i) state.u(i) = n01(rng);
    state.u.normalize();
  }
  Vec v;
  for (int it = 0; it < n_power_iters; ++it) {
    v = w.transpose() * state.u;
    const double vn = v.norm();
    if (vn == 0.0) return 0.0;
    v /= vn;
    Vec u = w * v;
    const double un = u.norm();
    if (un == 0.0) return 0.0;
    state.u = u / un;
  }
  const double sigma = state.u.dot(w * v);
  if (enabled && sigma > 0.0) w /= sigma;
  return sigma;
}

Mlp::Mlp(const std::vector<int>& sizes, Activation hidden_act, Activation output_act, Rng& rng)
    : hidden_act_(hidden_act), output_act_(output_act) {
  if (sizes.size() < 2) throw std::invalid_argument("an MLP needs input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) layers_.push_back(Linear::init(sizes[i], sizes[i + 1], rng));
}

Mat Mlp::forward(const Mat& x) const {
  Mat h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Activation act = i + 1 == layers_.size() ? output_act_ : hidden_act_;
    h = activate(layers_[i].forward(h), act);
  }
  return h;
}

Mat Mlp::forward(const Mat& x, Tape& tape) const {
  tape.inputs.resize(layers_.size());
  tape.pre.resize(layers_.size());
  Mat h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Activation act = i + 1 == layers_.size() ? output_act_ : hidden_act_;
    tape.inputs[i] = h;
    tape.pre[i] = layers_[i].forward(h);
    h = activate(tape.pre[i], act);
  }
  return h;
}

Mat Mlp::backward(const Tape& tape, const Mat& grad_out, Mlp& grads) const {
  Mat g = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Activation act = k + 1 == layers_.size() ? output_act_ : hidden_act_;
    if (act != Activation::identity) g = g.cwiseProduct(activation_derivative(tape.pre[k], act));
    grads.layers_[k].weight.noalias() += g * tape.inputs[k].transpose();
    grads.layers_[k].bias += g.rowwise().sum();
    g = layers_[k].weight.transpose() * g;
  }
  return g;
}

Mat Mlp::input_gradient(const Tape& tape, const Mat& grad_out) const {
  Mat g = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Activation act = k + 1 == layers_.size() ? output_act_ : hidden_act_;
    if (act != Activation::identity) g = g.cwiseProduct(activation_derivative(tape.pre[k], act));
    g = layers_[k].weight.transpose() * g;
  }
  return g;
}

Mlp Mlp::zeros_like() const {
  Mlp z = *this;
  z.set_zero();
  return z;
}

void Mlp::set_zero() {
  for (auto& layer : layers_) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
}

void Mlp::append_params(std::vector<std::span<double>>& out) {
  for (auto& layer : layers_) layer.append_params(out);
}

void Mlp::soft_update_from(const Mlp& source, double tau) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weight = (1.0 - tau) * layers_[i].weight + tau * source.layers_[i].weight;
    layers_[i].bias = (1.0 - tau) * layers_[i].bias + tau * source.layers_[i].bias;
  }
}

std::vector<int> Mlp::sizes() const {
  std::vector<int> s;
  if (layers_.empty()) return s;
  s.push_back(layers_.front().in_dim());
  for (const auto& layer : layers_) s.push_back(layer.out_dim());
  return s;
}

std::vector<std::span<double>> params_of(Mlp& net) {
  std::vector<std::span<double>> out;
  net.append_params(out);
  return out;
}

std::size_t total_size(const std::vector<std::span<double>>& spans) {
  std::size_t n = 0;
  for (const auto& s : spans) n += s.size();
  return n;
}

void Adam::step(const std::vector<std::span<double>>& params, const std::vector<std::span<double>>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("parameter/gradient list mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
      v_.push_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = Eigen::Map<Vec>(params[k].data(), static_cast<Eigen::Index>(params[k].size()));
    auto g = Eigen::Map<const Vec>(grads[k].data(), static_cast<Eigen::Index>(grads[k].size()));
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseAbs2();
    p.array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
  }
}

void MomentumSgd::step(const std::vector<std::span<double>>& params, const std::vector<std::span<double>>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("parameter/gradient list mismatch");
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.push_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = Eigen::Map<Vec>(params[k].data(), static_cast<Eigen::Index>(params[k].size()));
    auto g = Eigen::Map<const Vec>(grads[k].data(), static_cast<Eigen::Index>(grads[k].size()));
    velocity_[k] = momentum_ * velocity_[k] + g;
    p -= lr_ * velocity_[k];
  }
}

void write_f64(std::ostream& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  out.write(bytes, 8);
}

double read_f64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw std::runtime_error("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void write_linear(std::ostream& out, const Linear& layer) {
  for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) write_f64(out, layer.weight(r, c));
  write_vec(out, layer.bias);
}

void read_linear(std::istream& in, Linear& layer) {
  for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = read_f64(in);
  read_vec(in, layer.bias);
}

void write_vec(std::ostream& out, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(out, v(i));
}

void read_vec(std::istream& in, Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = read_f64(in);
}

}  // namespace mopo::nn
