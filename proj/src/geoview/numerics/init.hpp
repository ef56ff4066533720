#pragma once

#include <cmath>

#include "geoview/common/rng.hpp"
#include "geoview/numerics/tensor.hpp"

namespace geoview::nn {

// Glorot-uniform [fan_in, fan_out] weight, trainable.
inline Tensor xavier(const Shape& shape, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(shape.at(0) + shape.at(1)));
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-a, a);
  return Tensor::from(shape, std::move(v), true);
}

}  // namespace geoview::nn
