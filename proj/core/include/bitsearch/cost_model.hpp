#pragma once

#include "bitsearch/assignment.hpp"
#include "bitsearch/network.hpp"

namespace bitsearch {

struct CostParams {
  double energy_ratio = 120.0;  // memory-access energy over MAcc energy
  int max_bits = 8;
  int baseline_bits = 8;

  void validate() const;
};

enum class SpeedupMode { compute_only, full_cost };

/// n_weights * energy_ratio + n_macc.
double layer_cost(const LayerSpec& layer, const CostParams& p);

/// Cost-weighted bitwidth normalized by max_bits, in (0, 1]. Throws
/// DimensionError when the assignment length differs from the layer count.
double state_of_quantization(const NetworkSpec& spec, const QuantAssignment& a,
                             const CostParams& p);

/// Bit-serial latency ratio of the baseline bitwidth over the assignment.
double speedup_estimate(const NetworkSpec& spec, const QuantAssignment& a, const CostParams& p,
                        SpeedupMode mode);

/// Energy ratio of the baseline over the assignment, weighted by full layer cost.
double energy_estimate(const NetworkSpec& spec, const QuantAssignment& a, const CostParams& p);

}  // namespace bitsearch
