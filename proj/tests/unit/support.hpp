#pragma once

#include "bitsearch/network.hpp"
#include "bitsearch/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

namespace bitsearch::testing {

/// Central difference of `f` at every coordinate of `x`.
inline std::vector<double> numeric_gradient(std::span<double> x, const std::function<double()>& f,
                                            double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max |a - n| / max(1, |a|, |n|) over all coordinates.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline Architecture dense_arch(std::size_t in, std::vector<std::size_t> widths) {
  Architecture a;
  a.name = "mlp";
  a.input = {in};
  for (auto w : widths) a.layers.push_back({LayerKind::dense, w, 0});
  return a;
}

}  // namespace bitsearch::testing
