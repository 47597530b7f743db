#include "bitsearch/cost_model.hpp"

#include "bitsearch/error.hpp"

#include <fmt/format.h>

namespace bitsearch {

void CostParams::validate() const {
  if (!(energy_ratio > 0.0)) throw ConfigError("energy_ratio must be positive");
  if (max_bits < 1) throw ConfigError("max_bits must be positive");
  if (baseline_bits < 1) throw ConfigError("baseline_bits must be positive");
}

double layer_cost(const LayerSpec& layer, const CostParams& p) {
  return static_cast<double>(layer.n_weights) * p.energy_ratio + static_cast<double>(layer.n_macc);
}

namespace {

void check_length(const NetworkSpec& spec, const QuantAssignment& a) {
  if (a.size() != spec.layer_count()) {
    throw DimensionError(fmt::format("assignment has {} entries for {} layers", a.size(), spec.layer_count()));
  }
}

// sum(weight_l * baseline) / sum(weight_l * bits_l)
double bit_ratio(const NetworkSpec& spec, const QuantAssignment& a, const CostParams& p, bool full_cost) {
  check_length(spec, a);
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double w = full_cost ? layer_cost(spec.layers[l], p) : static_cast<double>(spec.layers[l].n_macc);
    num += w * p.baseline_bits;
    den += w * a[l];
  }
  return num / den;
}

}  // namespace

double state_of_quantization(const NetworkSpec& spec, const QuantAssignment& a, const CostParams& p) {
  check_length(spec, a);
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double cost = layer_cost(spec.layers[l], p);
    num += cost * a[l];
    den += cost;
  }
  return num / (den * p.max_bits);
}

double speedup_estimate(const NetworkSpec& spec, const QuantAssignment& a, const CostParams& p, SpeedupMode mode) {
  return bit_ratio(spec, a, p, mode == SpeedupMode::full_cost);
}

double energy_estimate(const NetworkSpec& spec, const QuantAssignment& a, const CostParams& p) {
  return bit_ratio(spec, a, p, true);
}

}  // namespace bitsearch
