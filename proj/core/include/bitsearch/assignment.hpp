#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace bitsearch {

/// Per-layer weight bitwidths, in layer order.
struct QuantAssignment {
  std::vector<int> bits;

  QuantAssignment() = default;
  explicit QuantAssignment(std::vector<int> b) : bits(std::move(b)) {}

  static QuantAssignment uniform(std::size_t layers, int b) {
    return QuantAssignment(std::vector<int>(layers, b));
  }

  std::size_t size() const noexcept { return bits.size(); }
  int operator[](std::size_t i) const { return bits[i]; }
  int& operator[](std::size_t i) { return bits[i]; }

  double average_bits() const;

  /// Dash-joined form, e.g. "2-2-3-2".
  std::string to_string() const;
  static QuantAssignment parse(std::string_view text);

  friend auto operator<=>(const QuantAssignment&, const QuantAssignment&) = default;
};

/// Throws InvalidBitwidthError on entries outside the quantizer domain
/// (< 2) or above `max_bits`, and on an empty or unsorted-duplicate set.
void validate_bitwidth_set(const std::vector<int>& set, int max_bits);

}  // namespace bitsearch
