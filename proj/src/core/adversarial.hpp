#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dataset.hpp"
#include "nn.hpp"
#include "rng.hpp"

namespace moan::model {

using nn::Matrix;
using nn::Network;

struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stdev;

  std::size_t size() const { return mean.size(); }
  double encode(std::size_t i, double v) const { return (v - mean[i]) / stdev[i]; }
  double decode(std::size_t i, double v) const { return mean[i] + stdev[i] * v; }
};

// Mean and variance over (delta s, r) in environment units.
struct GaussianPrediction {
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> normalized_log_variance;
};

class DynamicsEnsemble {
 public:
  DynamicsEnsemble() = default;
  DynamicsEnsemble(int d_s, int d_a, int members, const std::vector<int>& hidden);

  int d_s() const { return d_s_; }
  int d_a() const { return d_a_; }
  int output_dim() const { return d_s_ + 1; }
  int size() const { return static_cast<int>(members.size()); }
  const nn::NetSpec& spec() const { return members.front().spec(); }

  std::vector<Network<float>> members;
  Normalizer input_norm;   // concat(s, a)
  Normalizer output_norm;  // concat(delta s, r)

  GaussianPrediction predict(int member, std::span<const double> s, std::span<const double> a) const;

  // Normalized (d_s + d_a) x B network input for a batch of raw states/actions.
  Matrix<float> encode_inputs(const Matrix<double>& states, const Matrix<double>& actions) const;

 private:
  int d_s_ = 0;
  int d_a_ = 0;
};

// Probability that (s, a, s', r) is a real transition.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int d_s, int d_a, const std::vector<int>& hidden);
  // Generic feature discriminator (toy problems, tests).
  explicit Discriminator(nn::NetSpec spec) : net(std::move(spec)) {}

  Network<float> net;
  Normalizer state_norm;
  Normalizer action_norm;
  double reward_mean = 0.0;
  double reward_std = 1.0;

  int d_s() const { return d_s_; }
  int d_a() const { return d_a_; }

  double prob(std::span<const double> s, std::span<const double> a, std::span<const double> s_next,
              double r) const;
  // Columns are samples; rows are (s, a, s', r) in environment units.
  Matrix<float> encode(const Matrix<double>& tuples) const;

 private:
  int d_s_ = 0;
  int d_a_ = 0;
};

struct SampledTransition {
  std::vector<double> s_next;
  double r = 0.0;
  int member = 0;
};

SampledTransition sample_next(const DynamicsEnsemble& ensemble, std::span<const double> s,
                              std::span<const double> a, Rng& rng);

// ---- objectives -----------------------------------------------------------

// L_D = mean log D(real) + mean log(1 - D(fake)); the discriminator ascends it.
// grad holds dL_D/dphi (ascent direction).
template <typename T>
struct DiscObjective {
  double value = 0.0;
  double accuracy = 0.0;
  std::vector<T> grad;
};

template <typename T>
DiscObjective<T> disc_objective(const Network<T>& disc, const Matrix<T>& real, const Matrix<T>& fake,
                                bool want_grad = true);

// Everything the generator objective needs for one minibatch, in normalized
// units. The discriminator sees (s, a, s', r) where the (s', r) rows are an
// affine function of the sampled normalized output y:
//   disc_tail = disc_offset + disc_scale .* y,  y = mean + exp(lv / 2) .* noise
template <typename T>
struct GenBatch {
  Matrix<T> inputs;       // (d_s + d_a) x B, ensemble-normalized
  Matrix<T> targets;      // (d_s + 1) x B, normalized (delta s, r)
  Matrix<T> disc_head;    // (d_s + d_a) x B, discriminator-normalized (s, a)
  Matrix<T> disc_offset;  // (d_s + 1) x B
  nn::Vector<T> disc_scale;  // d_s + 1
  Matrix<T> noise;        // (d_s + 1) x B, fixed reparameterization noise
};

template <typename T>
struct GenObjective {
  double value = 0.0;
  double nll = 0.0;
  double adversarial = 0.0;
  std::vector<T> grad;  // dL_G/dtheta
  Matrix<T> fake;       // discriminator inputs of the generated tuples
};

// L_G = mean NLL + alpha * mean log(1 - D(generated)); with non_saturating the
// adversarial term is alpha * mean(-log D(generated)). D is held constant.
template <typename T>
GenObjective<T> gen_objective(const Network<T>& member, const Network<T>& disc, const GenBatch<T>& batch,
                              double alpha, bool non_saturating = false);

// ---- training -------------------------------------------------------------

struct ModelTrainConfig {
  int ensemble_size = 7;
  std::vector<int> hidden{200, 200};
  std::vector<int> disc_hidden{64, 64};
  double alpha = 0.1;
  double lr_gen = 1e-3;
  double lr_disc = 3e-4;
  int batch_size = 256;
  int max_epochs = 60;
  double holdout_fraction = 0.1;
  int patience = 5;
  int disc_steps_per_gen_step = 1;
  bool non_saturating = false;
  bool literal_signs = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ModelTrainReport {
  std::vector<double> gen_nll;
  std::vector<double> gen_adv_loss;
  std::vector<double> disc_loss;
  std::vector<std::vector<double>> holdout_mse;  // [epoch][member], normalized units
  std::vector<double> disc_accuracy;
  int stop_epoch = 0;
  int best_epoch = 0;
  double wall_time = 0.0;
};

struct TrainedModel {
  DynamicsEnsemble ensemble;
  Discriminator disc;
  ModelTrainReport report;
};

struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

HoldoutSplit split_holdout(std::size_t n, double fraction, std::uint64_t seed);

// Output normalization of (delta s, r) over the given records.
Normalizer output_normalizer(const data::TransitionDataset& ds, std::span<const std::size_t> indices);

using EpochCallback = std::function<void(int epoch, const ModelTrainReport&)>;

TrainedModel train_adversarial(const data::TransitionDataset& dataset, const ModelTrainConfig& config,
                               const EpochCallback& on_epoch = {});

enum class MseUnits { environment, normalized };

// Per-member mean squared error of the predicted mean (delta s, r), averaged
// over output dimensions and records.
std::vector<double> validation_mse(const DynamicsEnsemble& ensemble, const data::TransitionDataset& holdout,
                                   MseUnits units = MseUnits::environment);

// Normalized-unit batch prediction of one member: rows [0, k) mean, [k, 2k) log-variance.
Matrix<float> predict_normalized(const DynamicsEnsemble& ensemble, int member, const Matrix<float>& inputs);

}  // namespace moan::model
