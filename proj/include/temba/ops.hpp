#pragma once

// Differentiable primitives. Every op copies its output (no aliasing views)
// and records a backward rule when any input requires a gradient.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "temba/tensor.hpp"

namespace temba::ops {

namespace detail {

inline void same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ContractViolation(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename S>
S softplus_scalar(S x) {
  // log(1 + e^x) without overflow
  return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename S>
S sigmoid_scalar(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

// Elementwise unary op with derivative expressed via (input, output).
template <typename S, typename F, typename DF>
Tensor<S> unary(const char* name, const Tensor<S>& x, F f, DF df) {
  std::vector<S> out(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result<S>(name, x.shape(), std::move(out), {x}, [df](Node<S>& self) {
    S* gx = input_grad(self, 0);
    if (!gx) return;
    const auto& xin = self.inputs[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * df(xin[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::same_shape(a.shape(), b.shape(), "add");
  std::vector<S> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<S>("add", a.shape(), std::move(out), {a, b}, [](Node<S>& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (S* g = input_grad(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::same_shape(a.shape(), b.shape(), "sub");
  std::vector<S> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result<S>("sub", a.shape(), std::move(out), {a, b}, [](Node<S>& self) {
    if (S* g = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (S* g = input_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::same_shape(a.shape(), b.shape(), "mul");
  std::vector<S> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<S>("mul", a.shape(), std::move(out), {a, b}, [](Node<S>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (S* g = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (S* g = input_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  detail::same_shape(a.shape(), b.shape(), "div");
  std::vector<S> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  return make_result<S>("div", a.shape(), std::move(out), {a, b}, [](Node<S>& self) {
    const auto& bv = self.inputs[1]->value;
    if (S* g = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] / bv[i];
    if (S* g = input_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i] * self.value[i] / bv[i];
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  std::vector<S> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  return make_result<S>("scale", x.shape(), std::move(out), {x}, [c](Node<S>& self) {
    if (S* g = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += c * self.grad[i];
  });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& x, S c) {
  std::vector<S> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + c;
  return make_result<S>("add_scalar", x.shape(), std::move(out), {x}, [](Node<S>& self) {
    if (S* g = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
  return scale(x, S(-1));
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return detail::unary<S>(
      "exp", x, [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  for (S v : x.values())
    if (!(v > S(0))) throw NumericFault("log of non-positive value");
  return detail::unary<S>(
      "log", x, [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& x) {
  for (S v : x.values())
    if (v < S(0)) throw NumericFault("sqrt of negative value");
  return detail::unary<S>(
      "sqrt", x, [](S v) { return std::sqrt(v); }, [](S, S y) { return S(0.5) / y; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return detail::unary<S>(
      "sigmoid", x, [](S v) { return detail::sigmoid_scalar(v); },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> softplus(const Tensor<S>& x) {
  return detail::unary<S>(
      "softplus", x, [](S v) { return detail::softplus_scalar(v); },
      [](S v, S) { return detail::sigmoid_scalar(v); });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
  return detail::unary<S>(
      "tanh", x, [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

// x * sigmoid(x)
template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
  return detail::unary<S>(
      "silu", x, [](S v) { return v * detail::sigmoid_scalar(v); },
      [](S v, S) {
        const S s = detail::sigmoid_scalar(v);
        return s * (S(1) + v * (S(1) - s));
      });
}

// ----------------------------------------------------------------- reductions

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  S acc = 0;
  for (S v : x.values()) acc += v;
  return make_result<S>("sum", Shape{}, {acc}, {x}, [](Node<S>& self) {
    if (S* g = input_grad(self, 0)) {
      const S go = self.grad[0];
      for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) g[i] += go;
    }
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  require(x.numel() > 0, "mean of empty tensor");
  return scale(sum(x), S(1) / static_cast<S>(x.numel()));
}

// Sum over the leading axes, one value per channel: (..., D) -> (D).
template <typename S>
Tensor<S> sum_rows(const Tensor<S>& x) {
  const std::size_t d = x.shape().back(), rows = x.shape().rows();
  std::vector<S> out(d, S(0));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[j] += x[r * d + j];
  return make_result<S>("sum_rows", Shape{d}, std::move(out), {x}, [d, rows](Node<S>& self) {
    if (S* g = input_grad(self, 0))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[j];
  });
}

// ------------------------------------------------------------ linear algebra

// (M x K) or (B x T x K) times (K x N). Leading axes are treated as rows.
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require(b.rank() == 2, "matmul: right operand must be rank 2, got " + b.shape().str());
  require(a.rank() >= 1, "matmul: left operand is a scalar");
  const std::size_t k = a.shape().back(), n = b.shape()[1], m = a.shape().rows();
  if (b.shape()[0] != k)
    throw ContractViolation("matmul: inner dims differ " + a.shape().str() + " x " + b.shape().str());
  std::vector<S> out(m * n, S(0));
  const S* av = a.values().data();
  const S* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    S* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const S aip = av[i * k + p];
      if (aip == S(0)) continue;
      const S* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const Shape out_shape = a.shape().with(a.rank() - 1, n);
  return make_result<S>("matmul", out_shape, std::move(out), {a, b}, [m, k, n](Node<S>& self) {
    const S* go = self.grad.data();
    const S* av = self.inputs[0]->value.data();
    const S* bv = self.inputs[1]->value.data();
    if (S* ga = input_grad(self, 0)) {
      // ga += go * b^T, row-axpy form over a transposed copy of b.
      std::vector<S> bt(n * k);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bv[p * n + j];
      for (std::size_t i = 0; i < m; ++i) {
        const S* grow = go + i * n;
        S* garow = ga + i * k;
        for (std::size_t j = 0; j < n; ++j) {
          const S g = grow[j];
          if (g == S(0)) continue;
          const S* btrow = bt.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) garow[p] += g * btrow[p];
        }
      }
    }
    if (S* gb = input_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const S* grow = go + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const S aip = av[i * k + p];
          if (aip == S(0)) continue;
          S* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  require(x.rank() == 2, "transpose: rank-2 input required, got " + x.shape().str());
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<S> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return make_result<S>("transpose", Shape{c, r}, std::move(out), {x}, [r, c](Node<S>& self) {
    if (S* g = input_grad(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

// Broadcast a per-channel vector (D) over every row of x (..., D).
template <typename S>
Tensor<S> add_channel(const Tensor<S>& x, const Tensor<S>& v) {
  const std::size_t d = x.shape().back(), rows = x.shape().rows();
  require(v.rank() == 1 && v.numel() == d,
          "add_channel: vector " + v.shape().str() + " vs input " + x.shape().str());
  std::vector<S> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] + v[j];
  return make_result<S>("add_channel", x.shape(), std::move(out), {x, v}, [d, rows](Node<S>& self) {
    if (S* g = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (S* g = input_grad(self, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
  });
}

template <typename S>
Tensor<S> mul_channel(const Tensor<S>& x, const Tensor<S>& v) {
  const std::size_t d = x.shape().back(), rows = x.shape().rows();
  require(v.rank() == 1 && v.numel() == d,
          "mul_channel: vector " + v.shape().str() + " vs input " + x.shape().str());
  std::vector<S> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x[r * d + j] * v[j];
  return make_result<S>("mul_channel", x.shape(), std::move(out), {x, v}, [d, rows](Node<S>& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& vv = self.inputs[1]->value;
    if (S* g = input_grad(self, 0))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[r * d + j] * vv[j];
    if (S* g = input_grad(self, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j] * xv[r * d + j];
  });
}

// x W + b with W (Din x Dout) and b (Dout).
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  return add_channel(matmul(x, w), b);
}

// ------------------------------------------------------------ restructuring

// Copy with a new shape of equal element count.
template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  require(shape.numel() == x.numel(), "reshape: " + x.shape().str() + " -> " + shape.str());
  return make_result<S>("reshape", shape, x.vec(), {x}, [](Node<S>& self) {
    if (S* g = input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

namespace detail {

// Splits a shape around `axis` into (outer, extent, inner) strides.
inline void axis_split(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& extent,
                       std::size_t& inner) {
  require(axis < s.rank(), "axis " + std::to_string(axis) + " out of range for " + s.str());
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  extent = s[axis];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) inner *= s[i];
}

}  // namespace detail

// Picks positions `index` along `axis` (repeats allowed). Covers slicing,
// strided gathers and reversal.
template <typename S>
Tensor<S> gather(const Tensor<S>& x, std::size_t axis, std::vector<std::size_t> index) {
  std::size_t outer, extent, inner;
  detail::axis_split(x.shape(), axis, outer, extent, inner);
  for (std::size_t i : index) require(i < extent, "gather: index " + std::to_string(i) + " >= " + std::to_string(extent));
  const std::size_t m = index.size();
  std::vector<S> out(outer * m * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < m; ++j) {
      const S* src = x.values().data() + (o * extent + index[j]) * inner;
      std::copy(src, src + inner, out.data() + (o * m + j) * inner);
    }
  return make_result<S>("gather", x.shape().with(axis, m), std::move(out), {x},
                        [outer, extent, inner, idx = std::move(index)](Node<S>& self) {
                          S* g = input_grad(self, 0);
                          if (!g) return;
                          const std::size_t m = idx.size();
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t j = 0; j < m; ++j) {
                              const S* src = self.grad.data() + (o * m + j) * inner;
                              S* dst = g + (o * extent + idx[j]) * inner;
                              for (std::size_t q = 0; q < inner; ++q) dst[q] += src[q];
                            }
                        });
}

// Inverse placement of gather: position j of x along `axis` lands at
// index[j] of a zero tensor with `extent` positions. Targets must be distinct.
template <typename S>
Tensor<S> scatter(const Tensor<S>& x, std::size_t axis, std::vector<std::size_t> index,
                  std::size_t extent) {
  std::size_t outer, m, inner;
  detail::axis_split(x.shape(), axis, outer, m, inner);
  require(index.size() == m, "scatter: index count differs from axis extent");
  std::vector<char> hit(extent, 0);
  for (std::size_t i : index) {
    require(i < extent, "scatter: index out of range");
    require(!hit[i], "scatter: duplicate target index");
    hit[i] = 1;
  }
  std::vector<S> out(outer * extent * inner, S(0));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < m; ++j) {
      const S* src = x.values().data() + (o * m + j) * inner;
      std::copy(src, src + inner, out.data() + (o * extent + index[j]) * inner);
    }
  return make_result<S>("scatter", x.shape().with(axis, extent), std::move(out), {x},
                        [outer, extent, inner, idx = std::move(index)](Node<S>& self) {
                          S* g = input_grad(self, 0);
                          if (!g) return;
                          const std::size_t m = idx.size();
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t j = 0; j < m; ++j) {
                              const S* src = self.grad.data() + (o * extent + idx[j]) * inner;
                              S* dst = g + (o * m + j) * inner;
                              for (std::size_t q = 0; q < inner; ++q) dst[q] += src[q];
                            }
                        });
}

// Row-level gather over the flattened leading axes: output row r copies input
// row src[r] (channels unchanged), or is zero when src[r] == kNoRow.
inline constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& x, Shape out_shape, std::vector<std::size_t> src) {
  const std::size_t d = x.shape().back(), in_rows = x.shape().rows();
  require(out_shape.back() == d && out_shape.rows() == src.size(),
          "gather_rows: output shape " + out_shape.str() + " inconsistent with row map");
  std::vector<S> out(src.size() * d, S(0));
  for (std::size_t r = 0; r < src.size(); ++r) {
    if (src[r] == kNoRow) continue;
    require(src[r] < in_rows, "gather_rows: source row out of range");
    std::copy_n(x.values().data() + src[r] * d, d, out.data() + r * d);
  }
  return make_result<S>("gather_rows", out_shape, std::move(out), {x},
                        [d, map = std::move(src)](Node<S>& self) {
                          S* g = input_grad(self, 0);
                          if (!g) return;
                          for (std::size_t r = 0; r < map.size(); ++r) {
                            if (map[r] == kNoRow) continue;
                            const S* go = self.grad.data() + r * d;
                            S* gi = g + map[r] * d;
                            for (std::size_t j = 0; j < d; ++j) gi[j] += go[j];
                          }
                        });
}

// Positions [begin, end) along `axis`.
template <typename S>
Tensor<S> slice(const Tensor<S>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= x.shape()[axis], "slice: bad range");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return gather(x, axis, std::move(idx));
}

// Time reversal: axis 1 for rank 3, axis 0 otherwise.
template <typename S>
Tensor<S> reverse_time(const Tensor<S>& x) {
  const std::size_t axis = x.rank() == 3 ? 1 : 0;
  const std::size_t t = x.shape()[axis];
  std::vector<std::size_t> idx(t);
  for (std::size_t i = 0; i < t; ++i) idx[i] = t - 1 - i;
  return gather(x, axis, std::move(idx));
}

// Concatenation along the last (channel) axis.
template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const std::size_t rows = parts[0].shape().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == parts[0].rank() && p.shape().rows() == rows,
            "concat_channels: leading dims differ " + p.shape().str() + " vs " + parts[0].shape().str());
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  std::vector<S> out(rows * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(parts[k].values().data() + r * widths[k], widths[k], out.data() + r * total + off);
    off += widths[k];
  }
  const Shape shape = parts[0].shape().with(parts[0].rank() - 1, total);
  return make_result<S>("concat", shape, std::move(out), parts, [rows, total, widths](Node<S>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (S* g = input_grad(self, k))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += self.grad[r * total + off + j];
      off += widths[k];
    }
  });
}

// ------------------------------------------------------------- fused layers

// Per-row RMS normalization scaled by a per-channel weight.
template <typename S>
Tensor<S> rms_norm(const Tensor<S>& x, const Tensor<S>& weight, S eps = S(1e-5)) {
  const std::size_t d = x.shape().back(), rows = x.shape().rows();
  require(weight.rank() == 1 && weight.numel() == d, "rms_norm: weight shape");
  std::vector<S> out(x.numel());
  std::vector<S> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const S* xr = x.values().data() + r * d;
    S ss = 0;
    for (std::size_t j = 0; j < d; ++j) ss += xr[j] * xr[j];
    inv[r] = S(1) / std::sqrt(ss / static_cast<S>(d) + eps);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xr[j] * inv[r] * weight[j];
  }
  return make_result<S>("rms_norm", x.shape(), std::move(out), {x, weight},
                        [d, rows, inv = std::move(inv)](Node<S>& self) {
                          const auto& xv = self.inputs[0]->value;
                          const auto& wv = self.inputs[1]->value;
                          S* gx = input_grad(self, 0);
                          S* gw = input_grad(self, 1);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const S* xr = xv.data() + r * d;
                            const S* go = self.grad.data() + r * d;
                            if (gw)
                              for (std::size_t j = 0; j < d; ++j) gw[j] += go[j] * xr[j] * inv[r];
                            if (gx) {
                              // y_j = w_j x_j s, s = (mean(x^2)+eps)^-1/2
                              S dot = 0;
                              for (std::size_t j = 0; j < d; ++j) dot += go[j] * wv[j] * xr[j];
                              const S s3 = inv[r] * inv[r] * inv[r] / static_cast<S>(d);
                              for (std::size_t j = 0; j < d; ++j)
                                gx[r * d + j] += go[j] * wv[j] * inv[r] - xr[j] * dot * s3;
                            }
                          }
                        });
}

// Causal depthwise convolution over time: x (B,T,D), kernel (W,D), bias (D).
// out[t] = bias + sum_k kernel[k] * x[t - (W-1) + k], zero before t = 0.
template <typename S>
Tensor<S> causal_conv(const Tensor<S>& x, const Tensor<S>& kernel, const Tensor<S>& bias) {
  require(x.rank() == 3, "causal_conv: input must be (B,T,D)");
  const std::size_t nb = x.shape()[0], nt = x.shape()[1], d = x.shape()[2];
  require(kernel.rank() == 2 && kernel.shape()[1] == d, "causal_conv: kernel must be (W,D)");
  require(bias.rank() == 1 && bias.numel() == d, "causal_conv: bias must be (D)");
  const std::size_t w = kernel.shape()[0];
  std::vector<S> out(x.numel());
  const S* xv = x.values().data();
  const S* kv = kernel.values().data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t t = 0; t < nt; ++t) {
      S* o = out.data() + (b * nt + t) * d;
      for (std::size_t j = 0; j < d; ++j) o[j] = bias[j];
      for (std::size_t k = 0; k < w; ++k) {
        const std::size_t lag = w - 1 - k;
        if (lag > t) continue;
        const S* xr = xv + (b * nt + t - lag) * d;
        const S* kr = kv + k * d;
        for (std::size_t j = 0; j < d; ++j) o[j] += kr[j] * xr[j];
      }
    }
  return make_result<S>("causal_conv", x.shape(), std::move(out), {x, kernel, bias},
                        [nb, nt, d, w](Node<S>& self) {
                          const S* xv = self.inputs[0]->value.data();
                          const S* kv = self.inputs[1]->value.data();
                          S* gx = input_grad(self, 0);
                          S* gk = input_grad(self, 1);
                          S* gbias = input_grad(self, 2);
                          for (std::size_t b = 0; b < nb; ++b)
                            for (std::size_t t = 0; t < nt; ++t) {
                              const S* go = self.grad.data() + (b * nt + t) * d;
                              if (gbias)
                                for (std::size_t j = 0; j < d; ++j) gbias[j] += go[j];
                              for (std::size_t k = 0; k < w; ++k) {
                                const std::size_t lag = w - 1 - k;
                                if (lag > t) continue;
                                const std::size_t src = (b * nt + t - lag) * d;
                                if (gx)
                                  for (std::size_t j = 0; j < d; ++j) gx[src + j] += go[j] * kv[k * d + j];
                                if (gk)
                                  for (std::size_t j = 0; j < d; ++j) gk[k * d + j] += go[j] * xv[src + j];
                              }
                            }
                        });
}

}  // namespace temba::ops
