#include "bitsearch/training.hpp"

#include "bitsearch/error.hpp"
#include "bitsearch/rng.hpp"

#include <cmath>
#include <fmt/format.h>
#include <numeric>

namespace bitsearch {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (lambda_q < 0.0) throw ConfigError("lambda_q must be non-negative");
  if (lambda_wd < 0.0) throw ConfigError("lambda_wd must be non-negative");
  if (sinreq_bits < 1) throw ConfigError("sinreq_bits must be at least 1");
}

double weight_decay_loss(std::span<const double> w, double lambda_wd) {
  double sum = 0.0;
  for (double v : w) sum += v * v;
  return 0.5 * lambda_wd * sum;
}

void weight_decay_gradient(std::span<const double> w, double lambda_wd, std::span<double> grad) {
  for (std::size_t i = 0; i < w.size(); ++i) grad[i] += lambda_wd * w[i];
}

double sinreq_period(int qbits) { return std::ldexp(1.0, -qbits); }

double sinreq_loss(std::span<const double> w, int qbits, double lambda_q) {
  if (qbits < 1) throw InvalidBitwidthError(fmt::format("sinreq qbits {} < 1", qbits));
  const double k = kPi / sinreq_period(qbits);
  double sum = 0.0;
  for (double v : w) {
    const double s = std::sin(k * v);
    sum += s * s;
  }
  return 0.5 * lambda_q * sum;
}

void sinreq_gradient(std::span<const double> w, int qbits, double lambda_q, std::span<double> grad) {
  if (qbits < 1) throw InvalidBitwidthError(fmt::format("sinreq qbits {} < 1", qbits));
  // d/dw 0.5 sin^2(kw) = 0.5 k sin(2kw)
  const double k = kPi / sinreq_period(qbits);
  for (std::size_t i = 0; i < w.size(); ++i) grad[i] += 0.5 * lambda_q * k * std::sin(2.0 * k * w[i]);
}

double mean_grid_distance(std::span<const double> w, int qbits) {
  if (w.empty()) return 0.0;
  const double delta = sinreq_period(qbits);
  double sum = 0.0;
  for (double v : w) {
    const double t = v / delta;
    sum += std::abs(t - std::round(t));
  }
  return sum / static_cast<double>(w.size());
}

namespace {

double regularization(const NetworkWeights& weights, const TrainConfig& cfg,
                      const std::optional<QuantAssignment>& assignment, NetworkWeights* grad) {
  double total = 0.0;
  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    const auto w = weights.layers[l].weight.data();
    if (cfg.lambda_wd > 0.0) {
      total += weight_decay_loss(w, cfg.lambda_wd);
      if (grad) weight_decay_gradient(w, cfg.lambda_wd, grad->layers[l].weight.data());
    }
    if (cfg.lambda_q > 0.0) {
      const int qbits = assignment ? (*assignment)[l] : cfg.sinreq_bits;
      total += sinreq_loss(w, qbits, cfg.lambda_q);
      if (grad) sinreq_gradient(w, qbits, cfg.lambda_q, grad->layers[l].weight.data());
    }
  }
  return total;
}

}  // namespace

TrainResult train(const NetworkSpec& spec, NetworkWeights weights, const Dataset& data, const TrainConfig& cfg,
                  const std::optional<QuantAssignment>& assignment) {
  cfg.validate();
  if (data.split != Split::train) {
    throw DatasetError(fmt::format("train() needs the train split, got {}", to_string(data.split)));
  }
  data.validate();
  check_weights(spec, weights);

  TrainResult result;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  NetworkWeights grad;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - first);
      const std::span<const std::size_t> idx(order.data() + first, count);
      const Tensor batch = gather_rows(data.inputs, idx);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) labels[i] = data.labels[idx[i]];

      double loss = loss_and_gradient(spec, weights, batch, labels, assignment, grad);
      loss += regularization(weights, cfg, assignment, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingDivergedError(epoch, fmt::format("training diverged in epoch {} (loss {})", epoch, loss));
      }
      for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        auto apply = [&](Tensor& param, const Tensor& g) {
          auto p = param.data();
          const auto d = g.data();
          for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.learning_rate * d[i];
        };
        apply(weights.layers[l].weight, grad.layers[l].weight);
        apply(weights.layers[l].bias, grad.layers[l].bias);
      }
      epoch_loss += loss;
      ++batches;
    }
    const double mean = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
    if (!std::isfinite(mean)) {
      throw TrainingDivergedError(epoch, fmt::format("training diverged in epoch {}", epoch));
    }
    result.loss_curve.push_back(mean);
  }
  for (const auto& l : weights.layers) {
    if (!l.weight.all_finite() || !l.bias.all_finite()) {
      throw TrainingDivergedError(cfg.epochs - 1, fmt::format("non-finite weights after epoch {}", cfg.epochs - 1));
    }
  }
  result.weights = std::move(weights);
  return result;
}

double evaluate_accuracy(const NetworkSpec& spec, const NetworkWeights& weights, const Dataset& data,
                         const std::optional<QuantAssignment>& assignment) {
  if (data.empty()) throw DatasetError("cannot evaluate accuracy on an empty dataset");
  constexpr std::size_t chunk = 256;
  std::size_t correct = 0;
  for (std::size_t first = 0; first < data.size(); first += chunk) {
    const std::size_t count = std::min(chunk, data.size() - first);
    const Tensor logits = forward(spec, weights, data.inputs.slice_rows(first, count), assignment);
    const std::size_t c = logits.dim(1);
    for (std::size_t s = 0; s < count; ++s) {
      const double* row = logits.data().data() + s * c;
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (row[j] > row[best]) best = j;
      }
      if (static_cast<int>(best) == data.labels[first + s]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double finetune_and_estimate(const NetworkSpec& spec, const NetworkWeights& weights,
                             const QuantAssignment& assignment, const Dataset& train_data,
                             const Dataset& validation, const TrainConfig& cfg) {
  if (cfg.epochs <= 0) return evaluate_accuracy(spec, weights, validation, assignment);
  const TrainResult tuned = train(spec, weights, train_data, cfg, assignment);
  return evaluate_accuracy(spec, tuned.weights, validation, assignment);
}

}  // namespace bitsearch
