#pragma once

// Full network: input projection, stacked Temba blocks with dilated SSM
// branches and auxiliary heads, the multi-scale fuser and the output head.

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "temba/dilation.hpp"
#include "temba/model_config.hpp"
#include "temba/ops.hpp"
#include "temba/random.hpp"
#include "temba/ssm.hpp"
#include "temba/tensor.hpp"

namespace temba {

template <typename S>
struct Linear {
  Tensor<S> w;  // (in, out)
  Tensor<S> b;  // (out)

  static Linear init(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0) {
    return {Tensor<S>::from({in, out}, rng.normal_vec<S>(in * out, gain / std::sqrt(double(in))), true),
            Tensor<S>::zeros({out}, true)};
  }
  Tensor<S> operator()(const Tensor<S>& x) const { return ops::linear(x, w, b); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + "b", b);
    f(prefix + "w", w);
  }
};

// Projection, eta dilated SSM branches (phase i -> branch i), auxiliary head.
template <typename S>
struct TembaBlock {
  std::size_t eta = 1;
  Linear<S> proj;
  std::vector<SSMBranchParams<S>> branches;
  Linear<S> aux_head;

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    proj.visit(prefix + "proj.", f);
    for (std::size_t i = 0; i < branches.size(); ++i)
      branches[i].visit(prefix + "branch" + std::to_string(i) + ".", f);
    aux_head.visit(prefix + "aux.", f);
  }
};

template <typename S>
struct BlockOutput {
  Tensor<S> z;           // (B, T, D_k)
  Tensor<S> aux_logits;  // (B, T, head width)
};

template <typename S>
BlockOutput<S> temba_block_forward(const TembaBlock<S>& block, const Tensor<S>& z_prev) {
  const auto x = block.proj(z_prev);
  const auto dil = dilate(x, block.eta);
  std::vector<Tensor<S>> outs;
  outs.reserve(block.eta);
  for (std::size_t i = 0; i < block.eta; ++i)
    outs.push_back(branch_forward(block.branches[i], phase_streams(dil.streams, dil.spec, i)));
  const auto z = undilate(merge_phases(outs, dil.spec), dil.spec);
  return {z, block.aux_head(z)};
}

template <typename S>
struct Fuser {
  std::vector<Linear<S>> projections;  // sum variants: D_k -> E each
  Linear<S> concat;                    // concat variants: sum(D_k) -> E
  SSMBranchParams<S> ssm;              // ssm variants only
  bool has_ssm = false;
  bool concat_mode = false;

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    if (concat_mode) concat.visit(prefix + "concat.", f);
    for (std::size_t k = 0; k < projections.size(); ++k)
      projections[k].visit(prefix + "proj" + std::to_string(k + 1) + ".", f);
    if (has_ssm) ssm.visit(prefix + "ssm.", f);
  }
};

template <typename S>
Tensor<S> ms_fuser_forward(const Fuser<S>& fuser, const std::vector<Tensor<S>>& block_outputs) {
  Tensor<S> fused;
  if (fuser.concat_mode) {
    fused = fuser.concat(ops::concat_channels(block_outputs));
  } else {
    require(block_outputs.size() == fuser.projections.size(), "fuser: block count mismatch");
    for (std::size_t k = 0; k < block_outputs.size(); ++k) {
      auto p = fuser.projections[k](block_outputs[k]);
      fused = fused.defined() ? ops::add(fused, p) : p;
    }
  }
  return fuser.has_ssm ? branch_forward(fuser.ssm, fused) : fused;
}

template <typename S>
struct ModelOutput {
  Tensor<S> logits;  // (B, T, C) detection or (B, T, 1) regression scores
  std::vector<Tensor<S>> block_outputs;
  std::vector<Tensor<S>> aux_logits;
};

template <typename S>
class Model {
 public:
  using Scalar = S;

  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    const std::size_t out = cfg_.head_width();
    if (cfg_.arch == Arch::linear) {
      head_ = Linear<S>::init(cfg_.input_dim, out, rng);
      return;
    }
    const auto dims = cfg_.dims();
    input_ = Linear<S>::init(cfg_.input_dim, cfg_.d0, rng);
    for (std::size_t k = 1; k <= cfg_.blocks; ++k) {
      TembaBlock<S> blk;
      blk.eta = cfg_.eta(k);
      blk.proj = Linear<S>::init(dims[k - 1], dims[k], rng);
      for (std::size_t i = 0; i < blk.eta; ++i)
        blk.branches.push_back(SSMBranchParams<S>::init(dims[k], cfg_.state_dim, rng));
      blk.aux_head = Linear<S>::init(dims[k], out, rng);
      blocks_.push_back(std::move(blk));
    }
    if (cfg_.use_fuser) {
      const std::size_t e = cfg_.fuser_width();
      const auto v = cfg_.fuser_variant;
      fuser_.concat_mode = v == FuserVariant::concat_proj || v == FuserVariant::concat_proj_ssm;
      fuser_.has_ssm = v == FuserVariant::sum_proj_ssm || v == FuserVariant::concat_proj_ssm;
      if (fuser_.concat_mode) {
        std::size_t total = 0;
        for (std::size_t k = 1; k <= cfg_.blocks; ++k) total += dims[k];
        fuser_.concat = Linear<S>::init(total, e, rng);
      } else {
        for (std::size_t k = 1; k <= cfg_.blocks; ++k) fuser_.projections.push_back(Linear<S>::init(dims[k], e, rng));
      }
      if (fuser_.has_ssm) fuser_.ssm = SSMBranchParams<S>::init(e, cfg_.state_dim, rng);
    }
    head_ = Linear<S>::init(cfg_.fuser_width(), out, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<TembaBlock<S>>& blocks() const { return blocks_; }
  std::vector<TembaBlock<S>>& blocks() { return blocks_; }
  const Fuser<S>& fuser() const { return fuser_; }
  Fuser<S>& fuser() { return fuser_; }
  const Linear<S>& head() const { return head_; }
  Linear<S>& head() { return head_; }
  const Linear<S>& input_projection() const { return input_; }

  // x: (B, T, input_dim) raw features. mask: (B, T) 0/1 validity; padded
  // frames are zeroed before anything else so their content cannot leak.
  ModelOutput<S> forward(const Tensor<S>& x, const Tensor<S>* mask = nullptr) const {
    require(x.rank() == 3 && x.shape()[2] == cfg_.input_dim,
            "model: expected (B,T," + std::to_string(cfg_.input_dim) + ") features, got " + x.shape().str());
    Tensor<S> input = x;
    if (mask) input = apply_mask(x, *mask);
    ModelOutput<S> out;
    if (cfg_.arch == Arch::linear) {
      out.logits = head_(input);
      return out;
    }
    Tensor<S> z = input_(input);
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      BlockOutput<S> bo;
      try {
        bo = temba_block_forward(blocks_[k], z);
      } catch (const NumericFault& e) {
        throw NumericFault("block " + std::to_string(k + 1) + ": " + e.what());
      }
      z = bo.z;
      out.block_outputs.push_back(bo.z);
      out.aux_logits.push_back(bo.aux_logits);
    }
    const Tensor<S> fused = cfg_.use_fuser ? ms_fuser_forward(fuser_, out.block_outputs) : z;
    out.logits = head_(fused);
    return out;
  }

  // Every learnable tensor, sorted by name.
  std::vector<std::pair<std::string, Tensor<S>>> named_parameters() const {
    std::map<std::string, Tensor<S>> all;
    auto add = [&all](const std::string& name, const Tensor<S>& t) {
      if (t.defined()) all.emplace(name, t);
    };
    if (cfg_.arch == Arch::temba) {
      input_.visit("input.", add);
      for (std::size_t k = 0; k < blocks_.size(); ++k) blocks_[k].visit("block" + std::to_string(k + 1) + ".", add);
      if (cfg_.use_fuser) fuser_.visit("fuser.", add);
    }
    head_.visit("head.", add);
    return {all.begin(), all.end()};
  }

  std::vector<Tensor<S>> parameters() const {
    std::vector<Tensor<S>> v;
    for (auto& [_, t] : named_parameters()) v.push_back(t);
    return v;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : named_parameters()) n += t.numel();
    return n;
  }

  void zero_grad() const {
    for (const auto& [_, t] : named_parameters()) t.zero_grad();
  }

 private:
  static Tensor<S> apply_mask(const Tensor<S>& x, const Tensor<S>& mask) {
    const std::size_t nb = x.shape()[0], nt = x.shape()[1], nd = x.shape()[2];
    require(mask.shape() == Shape({nb, nt}), "model: mask shape " + mask.shape().str() + " vs features " + x.shape().str());
    std::vector<S> m(x.numel());
    for (std::size_t r = 0; r < nb * nt; ++r) std::fill_n(m.begin() + r * nd, nd, mask[r]);
    return ops::mul(x, Tensor<S>::from(x.shape(), std::move(m)));
  }

  ModelConfig cfg_;
  Linear<S> input_;
  std::vector<TembaBlock<S>> blocks_;
  Fuser<S> fuser_;
  Linear<S> head_;
};

template <typename S>
Tensor<S> classification_probs(const Tensor<S>& logits) {
  return ops::sigmoid(logits);
}

}  // namespace temba
