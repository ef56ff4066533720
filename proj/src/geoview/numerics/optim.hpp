#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geoview/numerics/tensor.hpp"

namespace geoview::nn {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

// lr(step) = base_lr * (1 + cos(pi * step / total_steps)) / 2, clamped to 0
// past the budget.
struct CosineSchedule {
  double base_lr = 1e-3;
  std::uint64_t total_steps = 1;

  double lr_at(std::uint64_t step) const;
};

struct AdamWConfig {
  double base_lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay:
//   p <- p * (1 - lr * wd)
//   m <- b1 m + (1 - b1) g ;  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
class AdamW {
 public:
  AdamW(ParamList params, AdamWConfig cfg, std::uint64_t total_steps);

  // Applies one update using the current gradients. Parameters without a
  // gradient are skipped and counted in `skipped_missing_grad()`.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return step_; }
  std::uint64_t skipped_missing_grad() const { return skipped_; }
  double current_lr() const { return schedule_.lr_at(step_); }
  const CosineSchedule& schedule() const { return schedule_; }
  const AdamWConfig& config() const { return cfg_; }
  const ParamList& params() const { return params_; }

  // Moment buffers in parameter order (for checkpointing).
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::uint64_t step, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  ParamList params_;
  AdamWConfig cfg_;
  CosineSchedule schedule_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t step_ = 0;
  std::uint64_t skipped_ = 0;
};

}  // namespace geoview::nn
