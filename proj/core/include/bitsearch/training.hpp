#pragma once

#include "bitsearch/dataset.hpp"
#include "bitsearch/network.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace bitsearch {

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 1;
  std::size_t batch_size = 32;
  double lambda_q = 0.0;   // sinusoidal regularizer strength
  double lambda_wd = 0.0;  // weight decay strength
  /// Period exponent of the sinusoidal regularizer when no assignment is
  /// given; with an assignment each layer uses its own bitwidth.
  int sinreq_bits = 8;
  std::uint64_t seed = 0;

  /// Throws ConfigError on a non-positive learning rate or batch size.
  void validate() const;
};

/// 0.5 * lambda * sum(w^2).
double weight_decay_loss(std::span<const double> w, double lambda_wd);
void weight_decay_gradient(std::span<const double> w, double lambda_wd, std::span<double> grad);

/// Period of the sinusoidal regularizer, 2^-qbits.
double sinreq_period(int qbits);

/// 0.5 * lambda_q * sum(sin^2(pi * w / 2^-qbits)). Zero exactly on multiples
/// of the period.
double sinreq_loss(std::span<const double> w, int qbits, double lambda_q);
/// Accumulates d(sinreq_loss)/dw into grad.
void sinreq_gradient(std::span<const double> w, int qbits, double lambda_q, std::span<double> grad);

/// Mean |w - nearest multiple of 2^-qbits|, in units of the period.
double mean_grid_distance(std::span<const double> w, int qbits);

struct TrainResult {
  NetworkWeights weights;
  std::vector<double> loss_curve;  // one mean total loss per epoch
};

/// Mini-batch SGD on cross-entropy plus the weight-decay and sinusoidal
/// regularizers over layer weights (biases are not regularized). Throws
/// TrainingDivergedError naming the epoch when the loss stops being finite.
TrainResult train(const NetworkSpec& spec, NetworkWeights weights, const Dataset& data,
                  const TrainConfig& cfg,
                  const std::optional<QuantAssignment>& assignment = std::nullopt);

/// Fraction of argmax-correct predictions; ties go to the lowest class.
double evaluate_accuracy(const NetworkSpec& spec, const NetworkWeights& weights,
                         const Dataset& data,
                         const std::optional<QuantAssignment>& assignment = std::nullopt);

/// Retrains a private copy of `weights` for `cfg.epochs` epochs with the
/// assignment active (0 epochs evaluates directly) and returns the
/// quantized validation accuracy.
double finetune_and_estimate(const NetworkSpec& spec, const NetworkWeights& weights,
                             const QuantAssignment& assignment, const Dataset& train_data,
                             const Dataset& validation, const TrainConfig& cfg);

}  // namespace bitsearch
