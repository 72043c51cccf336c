#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "temba/tensor.hpp"

namespace temba {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.02;
};

// AdamW with bias-corrected moments and decoupled weight decay:
//   p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps)
template <typename S>
class AdamW {
 public:
  AdamW(std::vector<Tensor<S>> params, std::vector<std::string> names, AdamWConfig cfg)
      : params_(std::move(params)), names_(std::move(names)), cfg_(cfg) {
    require(names_.empty() || names_.size() == params_.size(), "AdamW: one name per parameter");
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  std::size_t steps() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

  // Parameters without a gradient are treated as having a zero gradient.
  void step(double lr) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      if (!params_[k].has_grad()) continue;
      if (!all_finite(params_[k].grad()))
        throw NumericFault("AdamW: non-finite gradient in parameter '" + name(k) + "'");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto vals = params_[k].mutable_values();
      const bool has = params_[k].has_grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double g = has ? static_cast<double>(params_[k].grad()[i]) : 0.0;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        double p = static_cast<double>(vals[i]);
        p -= lr * cfg_.weight_decay * p;
        p -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
        vals[i] = static_cast<S>(p);
      }
    }
  }

 private:
  std::string name(std::size_t k) const { return k < names_.size() ? names_[k] : "#" + std::to_string(k); }

  std::vector<Tensor<S>> params_;
  std::vector<std::string> names_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

// Linear warmup from base/warmup to base over the first `warmup` epochs, then
// cosine decay reaching 0 at `total`.
inline double cosine_warmup_lr(double epoch, double base_lr, std::size_t warmup, std::size_t total) {
  require(warmup < total, "cosine_warmup_lr: warmup must be shorter than the schedule");
  require(epoch >= 0.0, "cosine_warmup_lr: negative epoch");
  if (epoch < static_cast<double>(warmup)) return base_lr * (epoch + 1.0) / static_cast<double>(warmup);
  const double progress = (epoch - static_cast<double>(warmup)) / static_cast<double>(total - warmup);
  if (progress >= 1.0) return 0.0;
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace temba
