#include "geoview/numerics/optim.hpp"

#include <cmath>
#include <numbers>

#include "geoview/common/error.hpp"

namespace geoview::nn {

double CosineSchedule::lr_at(std::uint64_t step) const {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

AdamW::AdamW(ParamList params, AdamWConfig cfg, std::uint64_t total_steps)
    : params_(std::move(params)), cfg_(cfg), schedule_{cfg.base_lr, total_steps} {
  require(cfg_.base_lr > 0.0, ErrorKind::Config, "learning rate must be positive");
  require(cfg_.weight_decay >= 0.0, ErrorKind::Config, "weight decay must be >= 0");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step() {
  const double lr = schedule_.lr_at(step_);
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) {
      ++skipped_;
      continue;
    }
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] *= 1.0 - lr * cfg_.weight_decay;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void AdamW::restore(std::uint64_t step, std::vector<std::vector<double>> m,
                    std::vector<std::vector<double>> v) {
  require(m.size() == params_.size() && v.size() == params_.size(),
          ErrorKind::Contract, "optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params_.size(); ++i)
    require(m[i].size() == params_[i].tensor.numel() &&
                v[i].size() == params_[i].tensor.numel(),
            ErrorKind::Contract,
            "optimizer moment shape mismatch for " + params_[i].name);
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace geoview::nn
