#pragma once

#include "bitsearch/network.hpp"

#include <cstdint>
#include <filesystem>

namespace bitsearch {

inline constexpr std::uint32_t kWeightsFormatVersion = 1;

/// Layout: "QFWT", u32 version, u32 layer count, then per layer the weight
/// and bias tensors as (u32 rank, u32 dims..., f64 values...). All integers
/// and floats little-endian.
void save_weights(const NetworkWeights& weights, const std::filesystem::path& path);
NetworkWeights load_weights(const std::filesystem::path& path);

}  // namespace bitsearch
