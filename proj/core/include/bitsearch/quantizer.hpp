#pragma once

#include "bitsearch/tensor.hpp"

#include <cmath>

namespace bitsearch {

inline constexpr int kMinBits = 2;

/// Number of positive levels of the k-bit mid-tread grid, 2^(k-1) - 1.
/// One bit carries the sign.
double mid_tread_levels(int bits);

/// Rounds half away from zero, which keeps the quantizer odd-symmetric.
inline double round_half_away(double x) noexcept { return std::round(x); }

/// Quantizes a weight already clipped to [-1, 1] onto the k-bit mid-tread
/// grid {i / (2^(k-1) - 1)}. Throws InvalidBitwidthError for k < 2.
double quantize_weight(double w, int bits);

/// Max-abs scale factor used for a layer; 1 for an all-zero tensor.
double layer_scale(std::span<const double> weights) noexcept;

/// Scales by the max-abs value, clips to [-1, 1], quantizes, and scales back.
Tensor quantize_layer(const Tensor& weights, int bits);

/// In-place variant over a raw buffer; returns the scale used.
double quantize_into(std::span<const double> weights, int bits, std::span<double> out);

}  // namespace bitsearch
