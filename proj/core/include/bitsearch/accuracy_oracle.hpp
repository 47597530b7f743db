#pragma once

#include "bitsearch/dataset.hpp"
#include "bitsearch/environment.hpp"
#include "bitsearch/training.hpp"

#include <cstdint>
#include <map>
#include <mutex>

namespace bitsearch {

struct FinetuneBudget {
  TrainConfig train{.learning_rate = 0.02, .epochs = 1};
  std::size_t train_subsample = 1000;
  std::size_t eval_subsample = 1000;
};

/// Short-retrain accuracy estimator. Every estimate finetunes a private copy
/// of the canonical weights, with a training stream keyed by the root seed
/// and the assignment, so results are a pure function of the assignment and
/// are memoized. Thread-safe.
class FinetuneOracle {
 public:
  FinetuneOracle(NetworkSpec spec, NetworkWeights canonical, const Dataset& train,
                 const Dataset& validation, FinetuneBudget budget, std::uint64_t seed);

  /// Quantized validation accuracy after the short retrain.
  double accuracy(const QuantAssignment& a);
  /// accuracy / full precision accuracy.
  double relative_accuracy(const QuantAssignment& a);

  double full_precision_accuracy() const noexcept { return full_precision_; }
  std::size_t finetune_count() const;

  AccuracyFn relative_fn() {
    return [this](const QuantAssignment& a) { return relative_accuracy(a); };
  }

 private:
  NetworkSpec spec_;
  NetworkWeights canonical_;
  Dataset train_;
  Dataset validation_;
  FinetuneBudget budget_;
  std::uint64_t seed_;
  double full_precision_ = 0.0;

  mutable std::mutex mutex_;
  std::map<QuantAssignment, double> cache_;  // NaN marks a diverged retrain
  std::size_t finetunes_ = 0;
};

}  // namespace bitsearch
