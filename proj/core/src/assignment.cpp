#include "bitsearch/assignment.hpp"

#include "bitsearch/error.hpp"
#include "bitsearch/quantizer.hpp"

#include <algorithm>
#include <charconv>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <numeric>

namespace bitsearch {

double QuantAssignment::average_bits() const {
  if (bits.empty()) return 0.0;
  return std::accumulate(bits.begin(), bits.end(), 0.0) / static_cast<double>(bits.size());
}

std::string QuantAssignment::to_string() const { return fmt::format("{}", fmt::join(bits, "-")); }

QuantAssignment QuantAssignment::parse(std::string_view text) {
  QuantAssignment out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto dash = text.find('-', pos);
    const auto token = text.substr(pos, dash == std::string_view::npos ? text.size() - pos : dash - pos);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size()) {
      throw Error(fmt::format("malformed assignment '{}'", text));
    }
    out.bits.push_back(value);
    if (dash == std::string_view::npos) break;
    pos = dash + 1;
  }
  return out;
}

void validate_bitwidth_set(const std::vector<int>& set, int max_bits) {
  if (set.empty()) throw InvalidBitwidthError("bitwidth set is empty");
  for (int b : set) {
    if (b < kMinBits) {
      throw InvalidBitwidthError(fmt::format("bitwidth {} is below the quantizer minimum of {}", b, kMinBits));
    }
    if (b > max_bits) {
      throw InvalidBitwidthError(fmt::format("bitwidth {} exceeds max_bits {}", b, max_bits));
    }
  }
  if (!std::is_sorted(set.begin(), set.end()) ||
      std::adjacent_find(set.begin(), set.end()) != set.end()) {
    throw InvalidBitwidthError("bitwidth set must be strictly increasing");
  }
}

}  // namespace bitsearch
