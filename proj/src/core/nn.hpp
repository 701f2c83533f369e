#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace moan::nn {

enum class Activation { tanh, relu };
enum class OutputHead { linear, gaussian_diag, sigmoid_scalar };

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 2.0;
inline constexpr double kLogitClamp = 15.0;

std::string to_string(Activation a);
std::string to_string(OutputHead h);
Activation activation_from_string(const std::string& s);
OutputHead head_from_string(const std::string& s);

struct NetSpec {
  std::vector<int> layer_widths;  // input, hidden..., output
  std::vector<Activation> activations;  // one per hidden layer
  OutputHead head = OutputHead::linear;

  static NetSpec mlp(int input, std::vector<int> hidden, int output, OutputHead head,
                     Activation act = Activation::relu);

  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }
  // Width of the head output: half the last layer for gaussian_diag is the mean.
  int layer_count() const { return static_cast<int>(layer_widths.size()) - 1; }
  std::size_t param_count() const;
  void validate() const;

  bool operator==(const NetSpec&) const = default;
};

struct LayerSlice {
  std::size_t weight_offset;
  std::size_t bias_offset;
  int rows;  // fan-out
  int cols;  // fan-in
};

std::vector<LayerSlice> layout(const NetSpec& spec);

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Activations recorded by a forward pass; consumed by backward.
template <typename T>
struct Tape {
  std::vector<Matrix<T>> inputs;  // inputs[l] feeds layer l
  std::vector<Matrix<T>> pre;     // pre-activation of layer l
  Matrix<T> output;               // after the head
};

// Dense feed-forward network. Samples are columns: an input batch is
// (input_width x batch). The gaussian_diag head returns rows [0, k) as the mean
// and rows [k, 2k) as the soft-clamped log-variance.
template <typename T>
class Network {
 public:
  Network() = default;
  explicit Network(NetSpec spec);

  const NetSpec& spec() const { return spec_; }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  void init_uniform(Rng& rng);

  Matrix<T> forward(const Matrix<T>& input) const;
  Matrix<T> forward(const Matrix<T>& input, Tape<T>& tape) const;

  // grad_output is dLoss/d(head output). Accumulates dLoss/dparams into
  // grad_params (when non-empty) and returns dLoss/dinput.
  Matrix<T> backward(const Tape<T>& tape, const Matrix<T>& grad_output,
                     std::span<T> grad_params) const;

  template <typename U>
  Network<U> cast() const {
    Network<U> out(spec_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = static_cast<U>(params_[i]);
    return out;
  }

 private:
  void check_input(const Matrix<T>& input) const;

  NetSpec spec_;
  std::vector<T> params_;
  std::vector<LayerSlice> layout_;
};

// Head transforms, exposed for tests and for code that needs raw logits.
// soft_clamp_logvar maps 0 to 0 and stays inside [kLogVarMin, kLogVarMax].
template <typename T>
T soft_clamp_logvar(T raw);
template <typename T>
T soft_clamp_logvar_grad(T raw);
template <typename T>
T clamped_sigmoid(T logit);

// Gaussian negative log-likelihood of one sample, summed over dimensions.
double gaussian_nll(std::span<const double> mean, std::span<const double> log_variance,
                    std::span<const double> target);

// Batch mean of the per-sample gaussian_nll, with gradients w.r.t. the mean
// and log-variance rows of a gaussian_diag head output.
template <typename T>
struct GaussianNllResult {
  double loss = 0.0;
  Matrix<T> grad_mean;
  Matrix<T> grad_log_variance;
};

template <typename T>
GaussianNllResult<T> gaussian_nll_batch(const Matrix<T>& mean, const Matrix<T>& log_variance,
                                        const Matrix<T>& target);

double bce_real_term(double d);
double bce_fake_term(double d);

template <typename T>
struct AdamState {
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState make(std::size_t n, double lr) {
    AdamState s;
    s.first_moment.assign(n, T(0));
    s.second_moment.assign(n, T(0));
    s.learning_rate = lr;
    return s;
  }
};

// Bias-corrected adaptive-moment descent step. Throws on non-finite gradients.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> gradient, AdamState<T>& state);

// Max over coordinates of |analytic - central difference| /
// max(1e-6, |analytic|, |numeric|). loss is evaluated at perturbed copies of params.
double grad_check(std::span<const double> params, std::span<const double> analytic,
                  const std::function<double(std::span<const double>)>& loss, double step = 1e-5);

template <typename T>
bool all_finite(std::span<const T> values);

template <typename T>
void soft_update(std::vector<T>& target, const std::vector<T>& source, double tau);

}  // namespace moan::nn
