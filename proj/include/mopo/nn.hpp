#pragma once

#include "mopo/common.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mopo::nn {

enum class Activation { identity, relu, tanh, swish };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// Elementwise activation and its derivative evaluated at pre-activations.
Mat activate(const Mat& pre, Activation act);
Mat activation_derivative(const Mat& pre, Activation act);

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Affine map y = W x + b; batches are stored one sample per column.
struct Linear {
  Mat weight;  // out x in
  Vec bias;    // out

  Linear() = default;
  Linear(int in, int out);
  /// Uniform(-1/sqrt(in), 1/sqrt(in)) initialization for weights and biases.
  static Linear init(int in, int out, Rng& rng);

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
  Mat forward(const Mat& x) const { return (weight * x).colwise() + bias; }

  Linear zeros_like() const { return Linear(in_dim(), out_dim()); }
  void append_params(std::vector<std::span<double>>& out);
};

/// Persistent power-iteration vector for one layer's spectral norm estimate.
struct SpectralState {
  Vec u;
};

/// Estimates the top singular value of `layer.weight` with `n_power_iters`
/// power iterations (reusing `state.u`) and, when `enabled`, divides the
/// weight by it. Returns the estimate. Zero matrices are left unchanged.
double spectral_normalize(Linear& layer, SpectralState& state, int n_power_iters, bool enabled, Rng& rng);

/// Fully connected network: hidden layers use `hidden_act`; the last layer
/// uses `output_act` (identity unless the network is a feature trunk).
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<int>& sizes, Activation hidden_act, Activation output_act, Rng& rng);

  /// Cached per-layer inputs and pre-activations for backprop.
  struct Tape {
    std::vector<Mat> inputs;
    std::vector<Mat> pre;
  };

  Mat forward(const Mat& x) const;
  Mat forward(const Mat& x, Tape& tape) const;

  /// Accumulates parameter gradients into `grads` (same shape as *this) for a
  /// given dL/d(output) and returns dL/d(input).
  Mat backward(const Tape& tape, const Mat& grad_out, Mlp& grads) const;
  /// dL/d(input) only.
  Mat input_gradient(const Tape& tape, const Mat& grad_out) const;

  Mlp zeros_like() const;
  void set_zero();
  void append_params(std::vector<std::span<double>>& out);

  /// Polyak update: this = (1 - tau) this + tau source.
  void soft_update_from(const Mlp& source, double tau);

  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }
  Activation hidden_activation() const { return hidden_act_; }
  Activation output_activation() const { return output_act_; }
  int in_dim() const { return layers_.front().in_dim(); }
  int out_dim() const { return layers_.back().out_dim(); }
  std::vector<int> sizes() const;

 private:
  std::vector<Linear> layers_;
  Activation hidden_act_ = Activation::relu;
  Activation output_act_ = Activation::identity;
};

std::vector<std::span<double>> params_of(Mlp& net);

/// Numbers of scalars across spans.
std::size_t total_size(const std::vector<std::span<double>>& spans);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<std::span<double>>& params, const std::vector<std::span<double>>& grads);
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<Vec> m_, v_;
};

/// Heavy-ball gradient descent with a fixed step.
class MomentumSgd {
 public:
  MomentumSgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {}
  void step(const std::vector<std::span<double>>& params, const std::vector<std::span<double>>& grads);

 private:
  double lr_, momentum_;
  std::vector<Vec> velocity_;
};

/// Little-endian float64 serialization helpers shared by checkpoints.
void write_f64(std::ostream& out, double x);
double read_f64(std::istream& in);
void write_linear(std::ostream& out, const Linear& layer);
void read_linear(std::istream& in, Linear& layer);
void write_vec(std::ostream& out, const Vec& v);
void read_vec(std::istream& in, Vec& v);

}  // namespace mopo::nn
