#pragma once

#include <algorithm>
#include <cstring>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "geoview/numerics/optim.hpp"
#include "geoview/numerics/tensor.hpp"

namespace geoview::testing {

struct GradReport {
  double max_rel = 0.0;
  std::string worst;
};

// Central differences of `loss` against the analytic gradient of every
// element of every parameter. `stride` > 1 checks a subset of elements.
inline GradReport check_gradients(const nn::ParamList& params,
                                  const std::function<nn::Tensor()>& loss, double h,
                                  std::size_t stride = 1) {
  for (const auto& p : params) p.tensor.impl()->grad.clear();
  nn::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    auto g = p.tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.tensor.numel(), 0.0);
  }
  GradReport rep;
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Tensor t = params[i].tensor;
    auto w = t.mutable_data();
    for (std::size_t j = 0; j < w.size(); j += stride) {
      const double saved = w[j];
      w[j] = saved + h;
      const double up = loss().item();
      w[j] = saved - h;
      const double down = loss().item();
      w[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][j];
      const double rel = std::abs(a - numeric) / std::max({1e-6, std::abs(a), std::abs(numeric)});
      if (rel > rep.max_rel) {
        rep.max_rel = rel;
        rep.worst = params[i].name + "[" + std::to_string(j) + "]";
      }
    }
  }
  return rep;
}

inline nn::Tensor random_tensor(nn::Shape shape, std::uint64_t seed, bool grad = true,
                                double scale = 1.0) {
  std::vector<double> v(nn::numel(shape));
  std::uint64_t s = seed * 0x9e3779b97f4a7c15ULL + 1;
  for (double& x : v) {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    x = scale * (static_cast<double>(s >> 11) * 0x1.0p-53 * 2.0 - 1.0);
  }
  return nn::Tensor::from(std::move(shape), std::move(v), grad);
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
           return std::memcmp(&x, &y, sizeof(double)) == 0;
         });
}

}  // namespace geoview::testing
