#pragma once

// Training objectives: masked per-frame BCE (and MSE for importance
// regression), the pairwise projection-consistency loss on the branches'
// C-generator weights, per-block auxiliary losses and the weighted total.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "temba/model.hpp"
#include "temba/ops.hpp"
#include "temba/tensor.hpp"

namespace temba {

inline constexpr double kLogClamp = 1e-7;

struct LossConfig {
  double alpha = 100.0;
  double beta = 1.0;
  double eps = kLogClamp;
  bool use_cons = true;
  bool use_aux = true;
  ConsPairs pairs = ConsPairs::all;

  static LossConfig from_model(const ModelConfig& m) {
    LossConfig c;
    c.alpha = m.alpha;
    c.beta = m.beta;
    c.use_cons = m.use_cons_loss;
    c.use_aux = m.use_aux_loss;
    c.pairs = m.cons_pairs;
    return c;
  }
};

// Scalar parts of one step. Absent terms (switched off) stay empty.
struct LossReport {
  double bce = 0.0;
  std::optional<double> cons;
  std::optional<double> aux_mean;
  std::vector<double> per_block_aux;
  double total = 0.0;
};

namespace detail {

template <typename S>
std::size_t count_valid_cells(const Shape& pred, const Tensor<S>& mask) {
  require(pred.rank() == 3, "loss: predictions must be (B,T,C), got " + pred.str());
  require(mask.shape() == Shape({pred[0], pred[1]}),
          "loss: mask " + mask.shape().str() + " does not match predictions " + pred.str());
  std::size_t valid = 0;
  for (S m : mask.values()) valid += m != S(0);
  if (valid == 0) throw ContractViolation("loss: mask has no valid frames");
  return valid * pred[2];
}

}  // namespace detail

// Mean over valid frame-class cells of -[y log p + (1-y) log(1-p)], with p
// clamped to [eps, 1-eps]. Clamped cells and masked frames pass no gradient.
template <typename S>
Tensor<S> bce_loss(const Tensor<S>& probs, const Tensor<S>& labels, const Tensor<S>& mask,
                   double eps = kLogClamp) {
  require(labels.shape() == probs.shape(), "bce_loss: labels " + labels.shape().str() + " vs probs " + probs.shape().str());
  const std::size_t cells = detail::count_valid_cells(probs.shape(), mask);
  const std::size_t c = probs.shape()[2], rows = probs.shape().rows();
  const S lo = static_cast<S>(eps), hi = S(1) - static_cast<S>(eps);
  S acc = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask[r] == S(0)) continue;
    for (std::size_t j = 0; j < c; ++j) {
      const S p = std::clamp(probs[r * c + j], lo, hi);
      const S y = labels[r * c + j];
      acc -= y * std::log(p) + (S(1) - y) * std::log(S(1) - p);
    }
  }
  const S inv = S(1) / static_cast<S>(cells);
  return make_result<S>("bce", Shape{}, {acc * inv}, {probs, labels, mask},
                        [rows, c, lo, hi, inv](Node<S>& self) {
                          S* gp = input_grad(self, 0);
                          if (!gp) return;
                          const auto& pv = self.inputs[0]->value;
                          const auto& yv = self.inputs[1]->value;
                          const auto& mv = self.inputs[2]->value;
                          const S go = self.grad[0] * inv;
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (mv[r] == S(0)) continue;
                            for (std::size_t j = 0; j < c; ++j) {
                              const S p = pv[r * c + j];
                              if (p < lo || p > hi) continue;
                              const S y = yv[r * c + j];
                              gp[r * c + j] += go * (-y / p + (S(1) - y) / (S(1) - p));
                            }
                          }
                        });
}

// Mean squared error over valid frames, for importance regression.
template <typename S>
Tensor<S> mse_loss(const Tensor<S>& pred, const Tensor<S>& target, const Tensor<S>& mask) {
  require(target.shape() == pred.shape(), "mse_loss: target " + target.shape().str() + " vs pred " + pred.shape().str());
  const std::size_t cells = detail::count_valid_cells(pred.shape(), mask);
  const std::size_t c = pred.shape()[2], rows = pred.shape().rows();
  S acc = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask[r] == S(0)) continue;
    for (std::size_t j = 0; j < c; ++j) {
      const S e = pred[r * c + j] - target[r * c + j];
      acc += e * e;
    }
  }
  const S inv = S(1) / static_cast<S>(cells);
  return make_result<S>("mse", Shape{}, {acc * inv}, {pred, target, mask}, [rows, c, inv](Node<S>& self) {
    S* gp = input_grad(self, 0);
    if (!gp) return;
    const auto& pv = self.inputs[0]->value;
    const auto& tv = self.inputs[1]->value;
    const auto& mv = self.inputs[2]->value;
    const S go = self.grad[0] * inv;
    for (std::size_t r = 0; r < rows; ++r) {
      if (mv[r] == S(0)) continue;
      for (std::size_t j = 0; j < c; ++j) gp[r * c + j] += go * S(2) * (pv[r * c + j] - tv[r * c + j]);
    }
  });
}

// 1 - cos(a, b) on the flattened tensors.
template <typename S>
Tensor<S> cosine_distance(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.shape() == b.shape(), "cosine_distance: shape mismatch");
  const auto fa = ops::reshape(a, Shape{a.numel()});
  const auto fb = ops::reshape(b, Shape{b.numel()});
  const auto na = ops::sqrt(ops::sum(ops::mul(fa, fa)));
  const auto nb = ops::sqrt(ops::sum(ops::mul(fb, fb)));
  if (na.item() == S(0) || nb.item() == S(0))
    throw ContractViolation("consistency loss: zero-norm projection matrix");
  const auto cos = ops::div(ops::sum(ops::mul(fa, fb)), ops::mul(na, nb));
  return ops::add_scalar(ops::neg(cos), S(1));
}

// Mean of 1 - cos over branch pairs of one block, on each branch's
// forward-direction C generator. Blocks with a single branch give 0.
template <typename S>
Tensor<S> consistency_loss(const std::vector<Tensor<S>>& c_weights, ConsPairs pairs = ConsPairs::all) {
  if (c_weights.size() < 2) return Tensor<S>::scalar(S(0));
  Tensor<S> acc;
  std::size_t count = 0;
  for (std::size_t i = 0; i < c_weights.size(); ++i)
    for (std::size_t j = i + 1; j < c_weights.size(); ++j) {
      if (pairs == ConsPairs::adjacent && j != i + 1) continue;
      auto d = cosine_distance(c_weights[i], c_weights[j]);
      acc = acc.defined() ? ops::add(acc, d) : d;
      ++count;
    }
  return ops::scale(acc, S(1) / static_cast<S>(count));
}

template <typename S>
Tensor<S> consistency_loss(const TembaBlock<S>& block, ConsPairs pairs = ConsPairs::all) {
  std::vector<Tensor<S>> cs;
  for (const auto& br : block.branches) cs.push_back(br.fwd.w_c);
  return consistency_loss(cs, pairs);
}

// Mean over blocks with at least two branches; 0 when none qualify.
template <typename S>
Tensor<S> model_consistency_loss(const Model<S>& model, ConsPairs pairs = ConsPairs::all) {
  Tensor<S> acc;
  std::size_t count = 0;
  for (const auto& blk : model.blocks()) {
    if (blk.branches.size() < 2) continue;
    auto l = consistency_loss(blk, pairs);
    acc = acc.defined() ? ops::add(acc, l) : l;
    ++count;
  }
  if (count == 0) return Tensor<S>::scalar(S(0));
  return ops::scale(acc, S(1) / static_cast<S>(count));
}

// Same contract as bce_loss on sigmoid(aux_logits).
template <typename S>
Tensor<S> aux_loss(const Tensor<S>& aux_logits, const Tensor<S>& labels, const Tensor<S>& mask,
                   double eps = kLogClamp) {
  return bce_loss(ops::sigmoid(aux_logits), labels, mask, eps);
}

// total = bce + alpha * cons + (beta / K) * sum(aux); switched-off terms are
// left out entirely.
inline LossReport total_loss(double bce, std::optional<double> cons, const std::vector<double>& aux,
                             const LossConfig& cfg, std::size_t k) {
  require(k >= 1, "total_loss: K must be >= 1");
  LossReport r;
  r.bce = bce;
  r.total = bce;
  if (cfg.use_cons && cons) {
    r.cons = cons;
    r.total += cfg.alpha * *cons;
  }
  if (cfg.use_aux && !aux.empty()) {
    r.per_block_aux = aux;
    double s = 0.0;
    for (double a : aux) s += a;
    r.aux_mean = s / static_cast<double>(aux.size());
    r.total += cfg.beta / static_cast<double>(k) * s;
  }
  return r;
}

template <typename S>
struct Objective {
  Tensor<S> total;
  LossReport report;
  std::vector<Tensor<S>> terms;  // weighted parts; total is their sum
};

// Builds the differentiable total for one forward pass. `targets` is the
// multi-hot label tensor (detection) or importance (B,T,1) (summarization).
template <typename S>
Objective<S> compute_objective(const Model<S>& model, const ModelOutput<S>& out, const Tensor<S>& targets,
                               const Tensor<S>& mask, const LossConfig& cfg) {
  const bool detection = model.config().mode == Mode::detection;
  auto primary = [&](const Tensor<S>& logits) {
    return detection ? bce_loss(ops::sigmoid(logits), targets, mask, cfg.eps) : mse_loss(logits, targets, mask);
  };
  const auto main = primary(out.logits);
  Tensor<S> total = main;
  std::vector<Tensor<S>> terms{main};
  std::optional<double> cons;
  std::vector<double> aux;
  const std::size_t k = std::max<std::size_t>(1, out.aux_logits.size());
  if (cfg.use_cons && model.config().arch == Arch::temba) {
    const auto c = model_consistency_loss(model, cfg.pairs);
    cons = static_cast<double>(c.item());
    terms.push_back(ops::scale(c, static_cast<S>(cfg.alpha)));
    total = ops::add(total, terms.back());
  }
  if (cfg.use_aux && !out.aux_logits.empty()) {
    Tensor<S> aux_sum;
    for (const auto& l : out.aux_logits) {
      auto a = primary(l);
      aux.push_back(static_cast<double>(a.item()));
      aux_sum = aux_sum.defined() ? ops::add(aux_sum, a) : a;
    }
    terms.push_back(ops::scale(aux_sum, static_cast<S>(cfg.beta / static_cast<double>(k))));
    total = ops::add(total, terms.back());
  }
  return {total, total_loss(static_cast<double>(main.item()), cons, aux, cfg, k), terms};
}

}  // namespace temba
