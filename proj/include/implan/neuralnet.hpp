#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "implan/motion_repr.hpp"
#include "implan/types.hpp"

namespace implan {

/// Small 1-D convolutional classifier over MotionRepr grids.
///
/// Layer stack (valid padding, 64-bit arithmetic throughout):
///   conv1: kernel 5, stride 2,  6 -> 16 channels, relu   (30 -> 13)
///   conv2: kernel 5, stride 2, 16 -> 32 channels, relu   (13 ->  5)
///   conv3: kernel 3, stride 1, 32 -> 64 channels, relu   ( 5 ->  3)
///   dense: 192 -> 1, logistic
class Discriminator {
 public:
  static constexpr int kConv1Out = 13;
  static constexpr int kConv2Out = 5;
  static constexpr int kConv3Out = 3;
  static constexpr int kFlatten = kConv3Out * 64;  // 192
  static constexpr int kParamCount = 16 * 30 + 16 + 32 * 80 + 32 + 64 * 96 + 64 + 192 + 1;

  /// All parameters zero; score of any input is exactly 0.5.
  Discriminator();

  /// Scaled-normal initialization: conv kernels N(0, 2/fan_in), dense
  /// N(0, 1/fan_in), biases zero.
  static Discriminator seeded(std::uint64_t seed);

  /// Probability in (0, 1) that the motion belongs to the desired set.
  double score(const MotionRepr& m) const;

  /// Elementwise identical to calling score on each entry.
  std::vector<double> score_batch(std::span<const MotionRepr> ms) const;

  const VecX& params() const { return params_; }
  VecX& params() { return params_; }

  void save(const std::string& path) const;
  static Discriminator load(const std::string& path);

 private:
  VecX params_;  // flat parameter block, layout in neuralnet.cpp
};

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

enum class LossMode { bce, paper_eq1 };

struct TrainConfig {
  int epochs = 10;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 64;
  LossMode loss_mode = LossMode::bce;
  double clamp_eps = 1e-7;  // score clamp inside the log terms
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Dataset loss. bce: mean cross-entropy with label 1 for real entries.
/// paper_eq1: mean log-score of generated entries minus mean log-score of
/// real entries. Scores are clamped to [clamp_eps, 1 - clamp_eps] inside
/// the logs.
double loss(const Discriminator& d, const LabeledDataset& dataset, LossMode mode,
            double clamp_eps = 1e-7);

/// Analytic full-batch gradient of `loss` with respect to every parameter.
VecX loss_gradient(const Discriminator& d, const LabeledDataset& dataset, LossMode mode,
                   double clamp_eps = 1e-7);

struct TrainResult {
  Discriminator model;
  std::vector<double> epoch_losses;  // full-dataset loss after each epoch
};

/// Mini-batch Adam with a seeded shuffle per epoch. Bit-identical results
/// for identical (initial parameters, dataset, config).
TrainResult train(const Discriminator& init, const LabeledDataset& dataset,
                  const TrainConfig& config);

/// Fraction of entries classified correctly at threshold 0.5.
double accuracy(const Discriminator& d, const LabeledDataset& dataset);

/// Max over parameters of |g_analytic - g_numeric| / max(1, |g_a| + |g_n|)
/// against central differences with step h.
double gradient_check(const Discriminator& d, const LabeledDataset& dataset,
                      LossMode mode = LossMode::bce, double h = 1e-5,
                      double clamp_eps = 1e-7);

}  // namespace implan
