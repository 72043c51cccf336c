#pragma once

// Selective state-space branch: input-dependent ZOH discretization, the
// recurrent scan with a hand-written reverse-time backward pass, the
// bidirectional wrapper and the gated branch around it.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "temba/ops.hpp"
#include "temba/random.hpp"
#include "temba/tensor.hpp"

namespace temba {

// Below this |delta * a| the ZOH input factor switches to its Taylor series.
inline constexpr double kZohSeriesThreshold = 1e-6;

template <typename S>
struct ZohStep {
  S a_bar;
  S b_bar;
};

// Diagonal zero-order hold for one (a, b) entry:
//   a_bar = exp(delta a),  b_bar = (delta a)^-1 (exp(delta a) - 1) delta b.
template <typename S>
ZohStep<S> discretize_zoh(S a, S b, S delta) {
  require(delta > S(0), "discretize_zoh: step size must be positive");
  const S x = delta * a;
  S factor;
  if (std::abs(x) < S(kZohSeriesThreshold)) {
    factor = delta * (S(1) + x / S(2) + x * x / S(6));
  } else {
    factor = std::expm1(x) / a;
  }
  return {std::exp(x), factor * b};
}

namespace detail {

// (e^{x} - 1)/a with x = delta a, and its partials in delta and a.
template <typename S>
struct ZohFactor {
  S f, df_ddelta, df_da;
};

template <typename S>
inline ZohFactor<S> zoh_factor(S delta, S a, S ea) {
  const S x = delta * a;
  if (std::abs(x) < S(kZohSeriesThreshold)) {
    return {delta * (S(1) + x / S(2) + x * x / S(6)), S(1) + x + x * x / S(2),
            delta * delta * (S(0.5) + x / S(3))};
  }
  const S em1 = std::expm1(x);
  return {em1 / a, ea, (x * ea - em1) / (a * a)};
}

}  // namespace detail

// Core recurrence over (B, L, D) streams with diagonal state per channel:
//   h_t[d,s] = exp(delta_t[d] A[d,s]) h_{t-1}[d,s] + f(delta_t[d], A[d,s]) Bt[t,s] u_t[d]
//   y_t[d]   = sum_s Ct[t,s] h_t[d,s]
// u, delta: (B,L,D); A: (D,n) strictly negative; Bt, Ct: (B,L,n). h_0 = 0.
template <typename S>
Tensor<S> scan(const Tensor<S>& u, const Tensor<S>& delta, const Tensor<S>& A,
               const Tensor<S>& Bt, const Tensor<S>& Ct) {
  require(u.rank() == 3, "scan: u must be (B,L,D), got " + u.shape().str());
  require(delta.shape() == u.shape(), "scan: delta shape " + delta.shape().str() + " vs u " + u.shape().str());
  const std::size_t nb = u.shape()[0], nl = u.shape()[1], nd = u.shape()[2];
  require(A.rank() == 2 && A.shape()[0] == nd, "scan: A must be (D,n)");
  const std::size_t ns = A.shape()[1];
  const Shape bc{nb, nl, ns};
  require(Bt.shape() == bc && Ct.shape() == bc, "scan: B/C must be (B,L,n) = " + bc.str());
  for (S v : delta.values())
    if (!(v > S(0))) throw ContractViolation("scan: step size must be positive");
  for (S v : A.values())
    if (!(v < S(0))) throw ContractViolation("scan: state matrix entries must be negative");

  const bool keep = grad_enabled() &&
                    (u.requires_grad() || delta.requires_grad() || A.requires_grad() ||
                     Bt.requires_grad() || Ct.requires_grad());
  const S* uv = u.values().data();
  const S* dv = delta.values().data();
  const S* av = A.values().data();
  const S* bv = Bt.values().data();
  const S* cv = Ct.values().data();

  std::vector<S> y(nb * nl * nd, S(0));
  std::vector<S> hist(keep ? nb * nl * nd * ns : 0);
  std::vector<S> h(nd * ns);
  for (std::size_t b = 0; b < nb; ++b) {
    std::fill(h.begin(), h.end(), S(0));
    for (std::size_t t = 0; t < nl; ++t) {
      const std::size_t row = b * nl + t;
      const S* bt = bv + row * ns;
      const S* ct = cv + row * ns;
      for (std::size_t d = 0; d < nd; ++d) {
        const S dt = dv[row * nd + d];
        const S ut = uv[row * nd + d];
        const S* ad = av + d * ns;
        S* hd = h.data() + d * ns;
        S acc = 0;
        for (std::size_t s = 0; s < ns; ++s) {
          const S x = dt * ad[s];
          const S ea = std::exp(x);
          const S f = std::abs(x) < S(kZohSeriesThreshold) ? dt * (S(1) + x / S(2) + x * x / S(6))
                                                            : std::expm1(x) / ad[s];
          hd[s] = ea * hd[s] + f * bt[s] * ut;
          acc += ct[s] * hd[s];
        }
        y[row * nd + d] = acc;
      }
      for (S v : h)
        if (!std::isfinite(v)) throw NumericFault("scan: non-finite state at step " + std::to_string(t));
      if (keep) std::copy(h.begin(), h.end(), hist.begin() + row * nd * ns);
    }
  }

  return make_result<S>(
      "scan", u.shape(), std::move(y), {u, delta, A, Bt, Ct},
      [nb, nl, nd, ns, hist = std::move(hist)](Node<S>& self) {
        const S* uv = self.inputs[0]->value.data();
        const S* dv = self.inputs[1]->value.data();
        const S* av = self.inputs[2]->value.data();
        const S* bv = self.inputs[3]->value.data();
        const S* cv = self.inputs[4]->value.data();
        S* gu = input_grad(self, 0);
        S* gdelta = input_grad(self, 1);
        S* gA = input_grad(self, 2);
        S* gB = input_grad(self, 3);
        S* gC = input_grad(self, 4);
        const S* gy = self.grad.data();
        std::vector<S> gh(nd * ns);
        for (std::size_t b = 0; b < nb; ++b) {
          std::fill(gh.begin(), gh.end(), S(0));
          for (std::size_t t = nl; t-- > 0;) {
            const std::size_t row = b * nl + t;
            const S* ht = hist.data() + row * nd * ns;
            const S* hprev = t > 0 ? hist.data() + (row - 1) * nd * ns : nullptr;
            const S* bt = bv + row * ns;
            const S* ct = cv + row * ns;
            for (std::size_t d = 0; d < nd; ++d) {
              const S g_out = gy[row * nd + d];
              const S dt = dv[row * nd + d];
              const S ut = uv[row * nd + d];
              const S* ad = av + d * ns;
              S* ghd = gh.data() + d * ns;
              S g_u = 0, g_dt = 0;
              for (std::size_t s = 0; s < ns; ++s) {
                const std::size_t ds = d * ns + s;
                ghd[s] += ct[s] * g_out;
                if (gC) gC[row * ns + s] += g_out * ht[ds];
                const S ea = std::exp(dt * ad[s]);
                const auto z = detail::zoh_factor(dt, ad[s], ea);
                const S hp = hprev ? hprev[ds] : S(0);
                const S g_a = ghd[s] * hp;          // d/d a_bar
                const S g_bbar = ghd[s] * ut;       // d/d (f * B)
                g_u += ghd[s] * z.f * bt[s];
                if (gB) gB[row * ns + s] += g_bbar * z.f;
                const S g_f = g_bbar * bt[s];
                g_dt += g_a * ad[s] * ea + g_f * z.df_ddelta;
                if (gA) gA[ds] += g_a * dt * ea + g_f * z.df_da;
                ghd[s] *= ea;  // carry to t-1
              }
              if (gu) gu[row * nd + d] += g_u;
              if (gdelta) gdelta[row * nd + d] += g_dt;
            }
          }
        }
      });
}

// Learnable weights of one scan direction. A = -exp(A_log) is diagonal per
// channel; delta, B_t and C_t are generated from the input at each step.
template <typename S>
struct ScanParams {
  Tensor<S> a_log;    // (D, n)
  Tensor<S> w_delta;  // (D, D)
  Tensor<S> b_delta;  // (D)
  Tensor<S> w_b;      // (D, n)
  Tensor<S> w_c;      // (D, n)

  std::size_t channels() const { return a_log.shape()[0]; }
  std::size_t state_dim() const { return a_log.shape()[1]; }

  static ScanParams init(std::size_t d, std::size_t n, Rng& rng) {
    ScanParams p;
    std::vector<S> alog(d * n);
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t s = 0; s < n; ++s)
        alog[c * n + s] = n > 1 ? static_cast<S>(std::log(static_cast<double>(n)) * s / (n - 1)) : S(0);
    p.a_log = Tensor<S>::from({d, n}, std::move(alog), true);
    p.w_delta = Tensor<S>::from({d, d}, rng.normal_vec<S>(d * d, 0.1 / std::sqrt(double(d))), true);
    std::vector<S> bd(d);
    for (auto& v : bd) {
      const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
      v = static_cast<S>(dt + std::log(-std::expm1(-dt)));  // softplus^-1(dt)
    }
    p.b_delta = Tensor<S>::from({d}, std::move(bd), true);
    p.w_b = Tensor<S>::from({d, n}, rng.normal_vec<S>(d * n, 1.0 / std::sqrt(double(d))), true);
    p.w_c = Tensor<S>::from({d, n}, rng.normal_vec<S>(d * n, 1.0 / std::sqrt(double(d))), true);
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + "a_log", a_log);
    f(prefix + "b_delta", b_delta);
    f(prefix + "w_b", w_b);
    f(prefix + "w_c", w_c);
    f(prefix + "w_delta", w_delta);
  }
};

// Unidirectional selective scan of a (B,L,D) stream.
template <typename S>
Tensor<S> selective_scan(const ScanParams<S>& p, const Tensor<S>& u) {
  const auto delta = ops::softplus(ops::linear(u, p.w_delta, p.b_delta));
  const auto bt = ops::matmul(u, p.w_b);
  const auto ct = ops::matmul(u, p.w_c);
  const auto a = ops::neg(ops::exp(p.a_log));
  return scan(u, delta, a, bt, ct);
}

// Forward scan plus the time-reversed scan of the reversed input, summed.
template <typename S>
Tensor<S> bidirectional_scan(const ScanParams<S>& fwd, const ScanParams<S>& bwd, const Tensor<S>& u) {
  require(fwd.a_log.shape() == bwd.a_log.shape(), "bidirectional_scan: direction dims differ");
  const auto y_fwd = selective_scan(fwd, u);
  const auto y_bwd = ops::reverse_time(selective_scan(bwd, ops::reverse_time(u)));
  return ops::add(y_fwd, y_bwd);
}

inline constexpr std::size_t kConvWidth = 4;

// One gated bidirectional SSM branch on D channels:
//   RMS norm -> (main, gate) projections -> causal depthwise conv -> SiLU
//   -> bidirectional scan -> * SiLU(gate) -> out projection -> + residual.
template <typename S>
struct SSMBranchParams {
  Tensor<S> norm_w;   // (D)
  Tensor<S> w_in;     // (D, D)
  Tensor<S> w_gate;   // (D, D)
  Tensor<S> conv_k;   // (W, D)
  Tensor<S> conv_b;   // (D)
  ScanParams<S> fwd;
  ScanParams<S> bwd;
  Tensor<S> w_out;    // (D, D)

  std::size_t channels() const { return norm_w.numel(); }

  static SSMBranchParams init(std::size_t d, std::size_t n, Rng& rng) {
    SSMBranchParams p;
    const double sd = 1.0 / std::sqrt(double(d));
    p.norm_w = Tensor<S>::full({d}, S(1), true);
    p.w_in = Tensor<S>::from({d, d}, rng.normal_vec<S>(d * d, sd), true);
    p.w_gate = Tensor<S>::from({d, d}, rng.normal_vec<S>(d * d, sd), true);
    p.conv_k = Tensor<S>::from({kConvWidth, d}, rng.uniform_vec<S>(kConvWidth * d, -0.5, 0.5), true);
    p.conv_b = Tensor<S>::zeros({d}, true);
    p.fwd = ScanParams<S>::init(d, n, rng);
    p.bwd = ScanParams<S>::init(d, n, rng);
    p.w_out = Tensor<S>::from({d, d}, rng.normal_vec<S>(d * d, 0.5 * sd), true);
    return p;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + "conv_b", conv_b);
    f(prefix + "conv_k", conv_k);
    fwd.visit(prefix + "fwd.", f);
    bwd.visit(prefix + "bwd.", f);
    f(prefix + "norm_w", norm_w);
    f(prefix + "w_gate", w_gate);
    f(prefix + "w_in", w_in);
    f(prefix + "w_out", w_out);
  }
};

template <typename S>
Tensor<S> branch_forward(const SSMBranchParams<S>& p, const Tensor<S>& u) {
  require(u.rank() == 3 && u.shape()[2] == p.channels(),
          "branch_forward: expected (B,T," + std::to_string(p.channels()) + "), got " + u.shape().str());
  const auto normed = ops::rms_norm(u, p.norm_w);
  const auto main = ops::matmul(normed, p.w_in);
  const auto gate = ops::matmul(normed, p.w_gate);
  const auto conv = ops::silu(ops::causal_conv(main, p.conv_k, p.conv_b));
  const auto mixed = ops::mul(bidirectional_scan(p.fwd, p.bwd, conv), ops::silu(gate));
  return ops::add(u, ops::matmul(mixed, p.w_out));
}

}  // namespace temba
