#pragma once

// Small random problems for gradient checks and smoke runs.

#include <cstdint>
#include <string>
#include <vector>

#include "temba/gradcheck.hpp"
#include "temba/model.hpp"
#include "temba/objectives.hpp"
#include "temba/random.hpp"

namespace temba {

struct ToySpec {
  std::size_t blocks = 3;
  std::size_t d0 = 8;
  std::size_t state_dim = 4;
  std::size_t t = 16;
  std::size_t num_classes = 3;
  std::size_t input_dim = 5;
  std::size_t batch = 1;
  std::size_t pad = 2;  // trailing masked frames in each sequence
  std::uint64_t seed = 0;

  ModelConfig model_config() const {
    ModelConfig c;
    c.blocks = blocks;
    c.d0 = d0;
    c.state_dim = state_dim;
    c.num_classes = num_classes;
    c.input_dim = input_dim;
    c.t_pad = t;
    c.seed = seed;
    return c;
  }
};

template <typename S>
struct ToyProblem {
  Tensor<S> features, targets, mask;
};

template <typename S>
ToyProblem<S> make_toy_problem(const ModelConfig& cfg, std::size_t batch, std::size_t t, std::size_t pad,
                               std::uint64_t seed) {
  require(pad < t, "toy problem: padding must leave at least one valid frame");
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t w = cfg.head_width();
  std::vector<S> mask(batch * t, S(1));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = t - pad; i < t; ++i) mask[b * t + i] = S(0);
  std::vector<S> tgt(batch * t * w);
  for (auto& v : tgt)
    v = cfg.mode == Mode::detection ? static_cast<S>(rng.uniform() < 0.4 ? 1 : 0) : static_cast<S>(rng.uniform());
  return {Tensor<S>::from({batch, t, cfg.input_dim}, rng.normal_vec<S>(batch * t * cfg.input_dim, 1.0)),
          Tensor<S>::from({batch, t, w}, std::move(tgt)), Tensor<S>::from({batch, t}, std::move(mask))};
}

inline constexpr double kModelGradStep = 1e-4;

// Sixth-order finite-difference check of the full objective w.r.t. every
// model parameter.
template <typename S>
GradCheckReport gradcheck_model(const Model<S>& model, const ToyProblem<S>& prob, double h, double tol) {
  const auto cfg = LossConfig::from_model(model.config());
  auto terms = [&]() {
    const auto out = model.forward(prob.features, &prob.mask);
    return compute_objective(model, out, prob.targets, prob.mask, cfg).terms;
  };
  std::vector<Tensor<S>> params;
  std::vector<std::string> names;
  for (const auto& [n, t] : model.named_parameters()) {
    names.push_back(n);
    params.push_back(t);
  }
  return finite_diff_check_terms<S>(terms, params, h, tol, names, Stencil::sixth_order);
}

}  // namespace temba
