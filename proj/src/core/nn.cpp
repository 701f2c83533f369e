#include "nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace moan::nn {

namespace {

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

double clamp_unshifted(double raw) {
  const double hi = kLogVarMax - softplus(kLogVarMax - raw);
  return kLogVarMin + softplus(hi - kLogVarMin);
}

// Input offset that makes the soft clamp map 0 to 0, so a zero head output
// means unit variance in normalized units.
const double kLogVarShift = [] {
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (clamp_unshifted(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}();

}  // namespace

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

std::string to_string(OutputHead h) {
  switch (h) {
    case OutputHead::linear: return "linear";
    case OutputHead::gaussian_diag: return "gaussian_diag";
    case OutputHead::sigmoid_scalar: return "sigmoid_scalar";
  }
  return "linear";
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  fail(ErrorCode::invalid_argument, "unknown activation '" + s + "'");
}

OutputHead head_from_string(const std::string& s) {
  if (s == "linear") return OutputHead::linear;
  if (s == "gaussian_diag") return OutputHead::gaussian_diag;
  if (s == "sigmoid_scalar") return OutputHead::sigmoid_scalar;
  fail(ErrorCode::invalid_argument, "unknown output head '" + s + "'");
}

NetSpec NetSpec::mlp(int input, std::vector<int> hidden, int output, OutputHead head,
                     Activation act) {
  NetSpec spec;
  spec.layer_widths.push_back(input);
  for (int h : hidden) spec.layer_widths.push_back(h);
  spec.layer_widths.push_back(output);
  spec.activations.assign(hidden.size(), act);
  spec.head = head;
  spec.validate();
  return spec;
}

std::size_t NetSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) {
    n += static_cast<std::size_t>(layer_widths[l + 1]) * (layer_widths[l] + 1);
  }
  return n;
}

void NetSpec::validate() const {
  require(layer_widths.size() >= 3, ErrorCode::invalid_argument,
          "NetSpec needs an input, at least one hidden layer and an output");
  for (int w : layer_widths) {
    require(w >= 1, ErrorCode::invalid_argument, "NetSpec layer widths must be >= 1");
  }
  require(activations.size() == layer_widths.size() - 2, ErrorCode::invalid_argument,
          "NetSpec needs exactly one activation per hidden layer");
  if (head == OutputHead::gaussian_diag) {
    require(output_width() % 2 == 0, ErrorCode::invalid_argument,
            "gaussian_diag head needs an even output width");
  }
  if (head == OutputHead::sigmoid_scalar) {
    require(output_width() == 1, ErrorCode::invalid_argument,
            "sigmoid_scalar head needs output width 1");
  }
}

std::vector<LayerSlice> layout(const NetSpec& spec) {
  std::vector<LayerSlice> out;
  std::size_t offset = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    LayerSlice slice;
    slice.cols = spec.layer_widths[l];
    slice.rows = spec.layer_widths[l + 1];
    slice.weight_offset = offset;
    offset += static_cast<std::size_t>(slice.rows) * slice.cols;
    slice.bias_offset = offset;
    offset += slice.rows;
    out.push_back(slice);
  }
  return out;
}

template <typename T>
T soft_clamp_logvar(T raw) {
  const T x = raw + T(kLogVarShift);
  const T hi = T(kLogVarMax) - softplus(T(kLogVarMax) - x);
  return std::min(T(kLogVarMax), T(kLogVarMin) + softplus(hi - T(kLogVarMin)));
}

template <typename T>
T soft_clamp_logvar_grad(T raw) {
  raw += T(kLogVarShift);
  const T hi = T(kLogVarMax) - softplus(T(kLogVarMax) - raw);
  if (T(kLogVarMin) + softplus(hi - T(kLogVarMin)) >= T(kLogVarMax)) return T(0);
  return sigmoid(T(kLogVarMax) - raw) * sigmoid(hi - T(kLogVarMin));
}

template <typename T>
T clamped_sigmoid(T logit) {
  return sigmoid(std::clamp(logit, T(-kLogitClamp), T(kLogitClamp)));
}

template <typename T>
Network<T>::Network(NetSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  params_.assign(spec_.param_count(), T(0));
  layout_ = layout(spec_);
}

template <typename T>
void Network<T>::init_uniform(Rng& rng) {
  std::fill(params_.begin(), params_.end(), T(0));
  for (const auto& slice : layout_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(slice.cols));
    const std::size_t n = static_cast<std::size_t>(slice.rows) * slice.cols;
    for (std::size_t i = 0; i < n; ++i) {
      params_[slice.weight_offset + i] = static_cast<T>(rng.uniform(-bound, bound));
    }
  }
}

template <typename T>
void Network<T>::check_input(const Matrix<T>& input) const {
  if (input.rows() != spec_.input_width()) {
    fail(ErrorCode::dimension_mismatch,
         "layer 0: expected input width " + std::to_string(spec_.input_width()) + ", got " +
             std::to_string(input.rows()));
  }
  if (params_.size() != spec_.param_count()) {
    fail(ErrorCode::dimension_mismatch, "parameter vector does not match the network layout");
  }
}

template <typename T>
Matrix<T> Network<T>::forward(const Matrix<T>& input) const {
  Tape<T> tape;
  return forward(input, tape);
}

template <typename T>
Matrix<T> Network<T>::forward(const Matrix<T>& input, Tape<T>& tape) const {
  check_input(input);
  const int layers = spec_.layer_count();
  tape.inputs.resize(layers);
  tape.pre.resize(layers);
  tape.inputs[0] = input;
  for (int l = 0; l < layers; ++l) {
    const auto& s = layout_[l];
    Eigen::Map<const Matrix<T>> w(params_.data() + s.weight_offset, s.rows, s.cols);
    Eigen::Map<const Vector<T>> b(params_.data() + s.bias_offset, s.rows);
    tape.pre[l].noalias() = w * tape.inputs[l];
    tape.pre[l].colwise() += b;
    if (l + 1 < layers) {
      if (spec_.activations[l] == Activation::relu) {
        tape.inputs[l + 1] = tape.pre[l].cwiseMax(T(0));
      } else {
        tape.inputs[l + 1] = tape.pre[l].array().tanh().matrix();
      }
    }
  }
  const Matrix<T>& raw = tape.pre[layers - 1];
  switch (spec_.head) {
    case OutputHead::linear:
      tape.output = raw;
      break;
    case OutputHead::gaussian_diag: {
      tape.output = raw;
      const int k = spec_.output_width() / 2;
      tape.output.bottomRows(k) = raw.bottomRows(k).unaryExpr([](T x) { return soft_clamp_logvar(x); });
      break;
    }
    case OutputHead::sigmoid_scalar:
      tape.output = raw.unaryExpr([](T x) { return clamped_sigmoid(x); });
      break;
  }
  return tape.output;
}

template <typename T>
Matrix<T> Network<T>::backward(const Tape<T>& tape, const Matrix<T>& grad_output,
                               std::span<T> grad_params) const {
  const int layers = spec_.layer_count();
  if (grad_output.rows() != tape.output.rows() || grad_output.cols() != tape.output.cols()) {
    fail(ErrorCode::dimension_mismatch, "backward: gradient shape does not match the forward output");
  }
  if (!grad_params.empty() && grad_params.size() != params_.size()) {
    fail(ErrorCode::dimension_mismatch, "backward: gradient buffer does not match the parameter count");
  }
  const Matrix<T>& raw = tape.pre[layers - 1];
  Matrix<T> delta;
  switch (spec_.head) {
    case OutputHead::linear:
      delta = grad_output;
      break;
    case OutputHead::gaussian_diag: {
      delta = grad_output;
      const int k = spec_.output_width() / 2;
      delta.bottomRows(k) = grad_output.bottomRows(k).cwiseProduct(
          raw.bottomRows(k).unaryExpr([](T x) { return soft_clamp_logvar_grad(x); }));
      break;
    }
    case OutputHead::sigmoid_scalar: {
      delta.resize(raw.rows(), raw.cols());
      for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        const T z = raw(0, j);
        const T limit = T(kLogitClamp);
        if (z <= -limit || z >= limit) {
          delta(0, j) = T(0);
        } else {
          const T d = tape.output(0, j);
          delta(0, j) = grad_output(0, j) * d * (T(1) - d);
        }
      }
      break;
    }
  }
  for (int l = layers - 1; l >= 0; --l) {
    const auto& s = layout_[l];
    if (!grad_params.empty()) {
      Eigen::Map<Matrix<T>> gw(grad_params.data() + s.weight_offset, s.rows, s.cols);
      Eigen::Map<Vector<T>> gb(grad_params.data() + s.bias_offset, s.rows);
      gw.noalias() += delta * tape.inputs[l].transpose();
      gb.noalias() += delta.rowwise().sum();
    }
    Eigen::Map<const Matrix<T>> w(params_.data() + s.weight_offset, s.rows, s.cols);
    Matrix<T> grad_in = w.transpose() * delta;
    if (l == 0) return grad_in;
    if (spec_.activations[l - 1] == Activation::relu) {
      delta = grad_in.cwiseProduct(
          tape.pre[l - 1].unaryExpr([](T x) { return x > T(0) ? T(1) : T(0); }));
    } else {
      delta = grad_in.cwiseProduct(
          (T(1) - tape.inputs[l].array().square()).matrix());
    }
  }
  return {};
}

double gaussian_nll(std::span<const double> mean, std::span<const double> log_variance,
                    std::span<const double> target) {
  require(mean.size() == log_variance.size() && mean.size() == target.size(),
          ErrorCode::dimension_mismatch, "gaussian_nll: mean, log_variance and target differ in length");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    require(std::isfinite(mean[i]) && std::isfinite(log_variance[i]) && std::isfinite(target[i]),
            ErrorCode::non_finite, "gaussian_nll: non-finite input");
    const double r = target[i] - mean[i];
    total += half_log_2pi + 0.5 * log_variance[i] + 0.5 * r * r / std::exp(log_variance[i]);
  }
  return total;
}

template <typename T>
GaussianNllResult<T> gaussian_nll_batch(const Matrix<T>& mean, const Matrix<T>& log_variance,
                                        const Matrix<T>& target) {
  require(mean.rows() == target.rows() && mean.cols() == target.cols() &&
              log_variance.rows() == mean.rows() && log_variance.cols() == mean.cols(),
          ErrorCode::dimension_mismatch, "gaussian_nll: shape mismatch");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const double inv_batch = 1.0 / static_cast<double>(mean.cols());
  GaussianNllResult<T> out;
  out.grad_mean.resize(mean.rows(), mean.cols());
  out.grad_log_variance.resize(mean.rows(), mean.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < mean.cols(); ++j) {
    for (Eigen::Index i = 0; i < mean.rows(); ++i) {
      const double lv = static_cast<double>(log_variance(i, j));
      const double inv_var = std::exp(-lv);
      const double r = static_cast<double>(target(i, j)) - static_cast<double>(mean(i, j));
      total += half_log_2pi + 0.5 * lv + 0.5 * r * r * inv_var;
      out.grad_mean(i, j) = static_cast<T>(-r * inv_var * inv_batch);
      out.grad_log_variance(i, j) = static_cast<T>((0.5 - 0.5 * r * r * inv_var) * inv_batch);
    }
  }
  out.loss = total * inv_batch;
  if (!std::isfinite(out.loss)) fail(ErrorCode::non_finite, "gaussian_nll: non-finite loss");
  return out;
}

double bce_real_term(double d) {
  require(d > 0.0 && d < 1.0, ErrorCode::invalid_argument, "bce_real_term: d must lie in (0,1)");
  return std::log(d);
}

double bce_fake_term(double d) {
  require(d > 0.0 && d < 1.0, ErrorCode::invalid_argument, "bce_fake_term: d must lie in (0,1)");
  return std::log1p(-d);
}

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> gradient, AdamState<T>& state) {
  require(params.size() == gradient.size() && state.first_moment.size() == params.size() &&
              state.second_moment.size() == params.size(),
          ErrorCode::dimension_mismatch, "adam_step: shape mismatch");
  if (!all_finite(gradient)) {
    fail(ErrorCode::non_finite, "adam_step: non-finite gradient at step " +
                                    std::to_string(state.step_count + 1));
  }
  state.step_count += 1;
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(state.beta1, static_cast<double>(state.step_count)));
  const T c2 = static_cast<T>(1.0 - std::pow(state.beta2, static_cast<double>(state.step_count)));
  const T lr = static_cast<T>(state.learning_rate);
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = gradient[i];
    state.first_moment[i] = b1 * state.first_moment[i] + (T(1) - b1) * g;
    state.second_moment[i] = b2 * state.second_moment[i] + (T(1) - b2) * g * g;
    const T m_hat = state.first_moment[i] / c1;
    const T v_hat = state.second_moment[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

double grad_check(std::span<const double> params, std::span<const double> analytic,
                  const std::function<double(std::span<const double>)>& loss, double step) {
  require(params.size() == analytic.size(), ErrorCode::dimension_mismatch,
          "grad_check: analytic gradient length differs from parameter count");
  require(step > 0.0, ErrorCode::invalid_argument, "grad_check: step must be positive");
  std::vector<double> probe(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double plus = loss(probe);
    probe[i] = saved - step;
    const double minus = loss(probe);
    probe[i] = saved;
    const double numeric = (plus - minus) / (2.0 * step);
    const double scale = std::max({1e-6, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

template <typename T>
void soft_update(std::vector<T>& target, const std::vector<T>& source, double tau) {
  require(target.size() == source.size(), ErrorCode::dimension_mismatch, "soft_update: size mismatch");
  const T a = static_cast<T>(tau);
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i] = (T(1) - a) * target[i] + a * source[i];
  }
}

template class Network<float>;
template class Network<double>;
template float soft_clamp_logvar(float);
template double soft_clamp_logvar(double);
template float soft_clamp_logvar_grad(float);
template double soft_clamp_logvar_grad(double);
template float clamped_sigmoid(float);
template double clamped_sigmoid(double);
template GaussianNllResult<float> gaussian_nll_batch(const Matrix<float>&, const Matrix<float>&,
                                                     const Matrix<float>&);
template GaussianNllResult<double> gaussian_nll_batch(const Matrix<double>&, const Matrix<double>&,
                                                      const Matrix<double>&);
template void adam_step(std::span<float>, std::span<const float>, AdamState<float>&);
template void adam_step(std::span<double>, std::span<const double>, AdamState<double>&);
template bool all_finite(std::span<const float>);
template bool all_finite(std::span<const double>);
template void soft_update(std::vector<float>&, const std::vector<float>&, double);
template void soft_update(std::vector<double>&, const std::vector<double>&, double);

}  // namespace moan::nn
