#include "bitsearch/quantizer.hpp"

#include "bitsearch/error.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace bitsearch {

double mid_tread_levels(int bits) {
  if (bits < kMinBits) {
    throw InvalidBitwidthError(fmt::format("bitwidth {} < {}: the mid-tread grid has no magnitude levels", bits, kMinBits));
  }
  if (bits > 53) throw InvalidBitwidthError(fmt::format("bitwidth {} exceeds double precision", bits));
  return std::ldexp(1.0, bits - 1) - 1.0;
}

double quantize_weight(double w, int bits) {
  const double levels = mid_tread_levels(bits);
  return round_half_away(levels * w) / levels;
}

double layer_scale(std::span<const double> weights) noexcept {
  double m = 0.0;
  for (double w : weights) m = std::max(m, std::abs(w));
  return m > 0.0 ? m : 1.0;
}

double quantize_into(std::span<const double> weights, int bits, std::span<double> out) {
  const double levels = mid_tread_levels(bits);
  const double scale = layer_scale(weights);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double clipped = std::clamp(weights[i] / scale, -1.0, 1.0);
    out[i] = round_half_away(levels * clipped) / levels * scale;
  }
  return scale;
}

Tensor quantize_layer(const Tensor& weights, int bits) {
  Tensor out(weights.shape());
  quantize_into(weights.data(), bits, out.data());
  return out;
}

}  // namespace bitsearch
