#include "bitsearch/pareto.hpp"

#include "bitsearch/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fmt/format.h>
#include <limits>
#include <mutex>
#include <thread>

namespace bitsearch {

bool is_dominated(const ParetoPoint& p, const ParetoPoint& q) {
  return q.quant <= p.quant && q.acc >= p.acc && (q.quant < p.quant || q.acc > p.acc);
}

std::vector<ParetoPoint> pareto_frontier(std::vector<ParetoPoint> points) {
  if (points.empty()) throw Error("pareto_frontier needs at least one point");
  std::sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.quant != b.quant) return a.quant < b.quant;
    if (a.acc != b.acc) return a.acc > b.acc;
    return a.assignment < b.assignment;
  });
  // Sweep in ascending quant: a point survives iff its accuracy beats every
  // cheaper (or equally cheap, earlier) point.
  std::vector<ParetoPoint> frontier;
  double best_acc = -std::numeric_limits<double>::infinity();
  for (auto& p : points) {
    if (p.acc > best_acc) {
      best_acc = p.acc;
      frontier.push_back(std::move(p));
    }
  }
  return frontier;
}

std::size_t space_size(std::size_t layers, std::size_t choices, std::size_t cap) {
  std::size_t n = 1;
  for (std::size_t l = 0; l < layers; ++l) {
    if (choices != 0 && n > cap / choices) return cap + 1;
    n *= choices;
  }
  return n;
}

std::vector<ParetoPoint> enumerate_space(const NetworkSpec& spec, const std::vector<int>& bitwidth_set,
                                         const CostParams& cost, const AccuracyFn& oracle,
                                         const EnumerateOptions& options) {
  validate_bitwidth_set(bitwidth_set, cost.max_bits);
  const std::size_t layers = spec.layer_count();
  const std::size_t total = space_size(layers, bitwidth_set.size(), options.cap);
  if (total > options.cap) {
    throw SpaceTooLargeError(fmt::format("{}^{} assignments exceed the enumeration cap of {}; subsample the space "
                                         "or raise the cap",
                                         bitwidth_set.size(), layers, options.cap));
  }

  // Assignment i in mixed radix, most significant digit first, which is
  // also lexicographic order over the sorted bitwidth set.
  std::vector<ParetoPoint> points(total);
  for (std::size_t i = 0; i < total; ++i) {
    std::vector<int> bits(layers);
    std::size_t rest = i;
    for (std::size_t l = layers; l-- > 0;) {
      bits[l] = bitwidth_set[rest % bitwidth_set.size()];
      rest /= bitwidth_set.size();
    }
    points[i].assignment = QuantAssignment(std::move(bits));
    points[i].quant = state_of_quantization(spec, points[i].assignment, cost);
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      try {
        try {
          points[i].acc = oracle(points[i].assignment);
        } catch (const TrainingDivergedError&) {
          points[i].acc = 0.0;
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
      }
    }
  };
  const unsigned jobs = std::max(1u, options.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (unsigned j = 0; j < jobs; ++j) threads.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return points;
}

ValidationReport validate_solution(const ParetoPoint& solution, const std::vector<ParetoPoint>& frontier,
                                   double eps_quant, double eps_acc) {
  if (frontier.empty()) throw Error("validate_solution needs a non-empty frontier");
  ValidationReport report;
  report.solution = solution;
  report.eps_quant = eps_quant;
  report.eps_acc = eps_acc;

  const ParetoPoint* witness = nullptr;
  const ParetoPoint* nearest = nullptr;
  double witness_dist = std::numeric_limits<double>::infinity();
  double nearest_dist = std::numeric_limits<double>::infinity();
  for (const auto& f : frontier) {
    const double dist = std::hypot(solution.quant - f.quant, solution.acc - f.acc);
    if (dist < nearest_dist) {
      nearest_dist = dist;
      nearest = &f;
    }
    if (solution.quant <= f.quant + eps_quant && solution.acc >= f.acc - eps_acc && dist < witness_dist) {
      witness_dist = dist;
      witness = &f;
    }
  }
  report.pass = witness != nullptr;
  report.nearest = witness ? *witness : *nearest;
  report.quant_gap = solution.quant - report.nearest.quant;
  report.acc_gap = report.nearest.acc - solution.acc;
  return report;
}

}  // namespace bitsearch
