#include "bitsearch/accuracy_oracle.hpp"

#include "bitsearch/error.hpp"

#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace bitsearch {

FinetuneOracle::FinetuneOracle(NetworkSpec spec, NetworkWeights canonical, const Dataset& train,
                               const Dataset& validation, FinetuneBudget budget, std::uint64_t seed)
    : spec_(std::move(spec)), canonical_(std::move(canonical)), budget_(budget), seed_(seed) {
  check_weights(spec_, canonical_);
  budget_.train.validate();
  if (train.empty() || validation.empty()) throw DatasetError("finetune oracle needs train and validation data");
  train_ = train.slice(0, std::min(budget_.train_subsample, train.size())).with_split(Split::train);
  validation_ = validation.slice(0, std::min(budget_.eval_subsample, validation.size()));
  if (!spec_.full_precision_accuracy) throw Error("finetune oracle needs the recorded full-precision accuracy");
  full_precision_ = *spec_.full_precision_accuracy;
  if (!(full_precision_ > 0.0)) throw Error("full-precision accuracy must be positive");
}

double FinetuneOracle::accuracy(const QuantAssignment& a) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(a); it != cache_.end()) {
      if (std::isnan(it->second)) {
        throw TrainingDivergedError(budget_.train.epochs - 1, fmt::format("short retrain of {} diverged", a.to_string()));
      }
      return it->second;
    }
  }
  TrainConfig cfg = budget_.train;
  cfg.seed = child_seed(seed_, a.to_string());
  double acc = std::numeric_limits<double>::quiet_NaN();
  bool diverged = false;
  try {
    acc = finetune_and_estimate(spec_, canonical_, a, train_, validation_, cfg);
  } catch (const TrainingDivergedError&) {
    diverged = true;
  }
  {
    std::lock_guard lock(mutex_);
    cache_.emplace(a, acc);
    ++finetunes_;
  }
  if (diverged) {
    throw TrainingDivergedError(budget_.train.epochs - 1, fmt::format("short retrain of {} diverged", a.to_string()));
  }
  return acc;
}

double FinetuneOracle::relative_accuracy(const QuantAssignment& a) { return accuracy(a) / full_precision_; }

std::size_t FinetuneOracle::finetune_count() const {
  std::lock_guard lock(mutex_);
  return finetunes_;
}

}  // namespace bitsearch
