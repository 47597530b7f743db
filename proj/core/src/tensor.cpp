#include "bitsearch/tensor.hpp"

#include "bitsearch/error.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <functional>
#include <numeric>

namespace bitsearch {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, "x")); }

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError(fmt::format("shape {} holds {} values, got {}", shape_to_string(shape_),
                                     shape_size(shape_), data_.size()));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError(fmt::format("cannot reshape {} to {}", shape_to_string(shape_), shape_to_string(shape)));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t first, std::size_t count) const {
  if (shape_.empty() || first + count > shape_[0]) {
    throw DimensionError(fmt::format("row slice [{}, {}) out of range for {}", first, first + count,
                                     shape_to_string(shape_)));
  }
  const std::size_t row = shape_[0] == 0 ? 0 : data_.size() / shape_[0];
  Shape s = shape_;
  s[0] = count;
  auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * row);
  return Tensor(std::move(s), std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * row)));
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

}  // namespace bitsearch
