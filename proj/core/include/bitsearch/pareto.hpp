#pragma once

#include "bitsearch/assignment.hpp"
#include "bitsearch/cost_model.hpp"
#include "bitsearch/environment.hpp"

#include <vector>

namespace bitsearch {

struct ParetoPoint {
  QuantAssignment assignment;
  double quant = 1.0;
  double acc = 0.0;
};

/// True iff `q` dominates `p`: no worse on both axes (lower quant, higher
/// acc) and strictly better on at least one.
bool is_dominated(const ParetoPoint& p, const ParetoPoint& q);

/// Non-dominated points sorted by ascending quant. Among identical
/// (quant, acc) pairs the lexicographically smallest assignment is kept.
/// Throws Error on empty input.
std::vector<ParetoPoint> pareto_frontier(std::vector<ParetoPoint> points);

struct EnumerateOptions {
  std::size_t cap = 10000;
  unsigned jobs = 1;
};

/// Number of assignments, or cap + 1 when it would exceed `cap`.
std::size_t space_size(std::size_t layers, std::size_t choices, std::size_t cap);

/// Evaluates every assignment over `bitwidth_set`, sorted by assignment.
/// Throws SpaceTooLargeError when |set|^L exceeds the cap.
std::vector<ParetoPoint> enumerate_space(const NetworkSpec& spec,
                                         const std::vector<int>& bitwidth_set,
                                         const CostParams& cost, const AccuracyFn& oracle,
                                         const EnumerateOptions& options = {});

struct ValidationReport {
  bool pass = false;
  ParetoPoint solution;
  ParetoPoint nearest;    // witness when passing, else closest frontier point
  double quant_gap = 0.0; // solution.quant - nearest.quant
  double acc_gap = 0.0;   // nearest.acc - solution.acc
  double eps_quant = 0.0;
  double eps_acc = 0.0;
};

/// PASS iff some frontier point f has solution.quant <= f.quant + eps_quant
/// and solution.acc >= f.acc - eps_acc.
ValidationReport validate_solution(const ParetoPoint& solution,
                                   const std::vector<ParetoPoint>& frontier, double eps_quant,
                                   double eps_acc);

}  // namespace bitsearch
