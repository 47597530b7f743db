#pragma once

#include "bitsearch/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bitsearch {

enum class Split { train, validation, test };

std::string to_string(Split split);

struct Dataset {
  Tensor inputs;  // {N, feature dims...}
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  Shape feature_shape() const;

  /// Items [first, first + count).
  Dataset slice(std::size_t first, std::size_t count) const;
  Dataset with_split(Split s) const;

  /// Throws DatasetError on count mismatch, labels out of range, or < 2 classes.
  void validate() const;
};

/// Gathers the given rows of `inputs` into a new {indices.size(), ...} tensor.
Tensor gather_rows(const Tensor& inputs, std::span<const std::size_t> indices);

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX ubyte image file and its label file. Pixels are scaled to
/// [0, 1] and images shaped {N, 1, rows, cols}.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Split split = Split::train);

/// Writes pixels (clamped to [0, 1], scaled to 0..255) and labels as IDX
/// ubyte files. Inputs must be {N, 1, rows, cols} or {N, rows, cols}.
void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels);

enum class SynthKind {
  blobs,   // isotropic Gaussian clusters
  moons,   // two interleaved half circles
  glyphs,  // small stroke images on a 1x12x12 canvas, 10 classes
};

std::string to_string(SynthKind kind);
SynthKind parse_synth_kind(const std::string& text);

struct SynthOptions {
  std::size_t classes = 2;        // blobs only; moons is 2, glyphs is 10
  std::size_t dims = 2;           // blobs only
  double separation = 5.0;        // blobs: center spacing in units of sigma
  double noise = 0.1;             // moons / glyphs pixel noise
  std::uint64_t prototype_seed = 0x5eed;  // glyphs: shared across splits
};

/// Deterministic in `seed`; classes are balanced (round-robin labels).
Dataset synth_dataset(SynthKind kind, std::size_t n, std::uint64_t seed,
                      const SynthOptions& options = {}, Split split = Split::train);

}  // namespace bitsearch
