#pragma once

// Stride-eta partition of the time axis into eta phase streams and its exact
// inverse. Phase i (0-based) holds positions i, i+eta, i+2eta, ...; short
// phases are zero-padded at the tail and the pads are masked out.

#include <cstddef>
#include <utility>
#include <vector>

#include "temba/ops.hpp"
#include "temba/tensor.hpp"

namespace temba {

struct DilationSpec {
  std::size_t eta = 1;
  std::size_t batch = 1;
  std::size_t original_t = 0;
  std::size_t padded_len = 0;  // ceil(T / eta)
  // valid[i * padded_len + j]: slot j of phase i maps to a real position.
  std::vector<bool> valid;

  std::size_t streams() const { return eta * batch; }
  std::size_t pad_slots() const { return padded_len * eta - original_t; }
  // Original time index of slot j of phase i (may be >= original_t for pads).
  std::size_t position(std::size_t phase, std::size_t slot) const { return phase + slot * eta; }

  static DilationSpec make(std::size_t batch, std::size_t t, std::size_t eta) {
    require(eta >= 1, "dilate: eta must be >= 1");
    require(t >= 1, "dilate: sequence length must be >= 1");
    DilationSpec s;
    s.eta = eta;
    s.batch = batch;
    s.original_t = t;
    s.padded_len = (t + eta - 1) / eta;
    s.valid.resize(eta * s.padded_len);
    for (std::size_t i = 0; i < eta; ++i)
      for (std::size_t j = 0; j < s.padded_len; ++j) s.valid[i * s.padded_len + j] = s.position(i, j) < t;
    return s;
  }
};

template <typename S>
struct Dilated {
  Tensor<S> streams;  // (eta * B, ceil(T/eta), D), stream index b * eta + phase
  DilationSpec spec;
};

template <typename S>
Dilated<S> dilate(const Tensor<S>& x, std::size_t eta) {
  require(x.rank() == 3, "dilate: input must be (B,T,D), got " + x.shape().str());
  const std::size_t nb = x.shape()[0], nt = x.shape()[1], nd = x.shape()[2];
  auto spec = DilationSpec::make(nb, nt, eta);
  const std::size_t len = spec.padded_len;
  std::vector<std::size_t> src(nb * eta * len, ops::kNoRow);
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t i = 0; i < eta; ++i)
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t t = spec.position(i, j);
        if (t < nt) src[(b * eta + i) * len + j] = b * nt + t;
      }
  auto streams = ops::gather_rows(x, Shape{nb * eta, len, nd}, std::move(src));
  return {std::move(streams), std::move(spec)};
}

// Restores original temporal order; padded slots are dropped.
template <typename S>
Tensor<S> undilate(const Tensor<S>& streams, const DilationSpec& spec) {
  require(streams.rank() == 3 && streams.shape()[0] == spec.streams() &&
              streams.shape()[1] == spec.padded_len,
          "undilate: streams " + streams.shape().str() + " inconsistent with spec (eta=" +
              std::to_string(spec.eta) + ", T=" + std::to_string(spec.original_t) + ")");
  const std::size_t nb = spec.batch, nt = spec.original_t, len = spec.padded_len, eta = spec.eta;
  std::vector<std::size_t> src(nb * nt);
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t t = 0; t < nt; ++t) src[b * nt + t] = (b * eta + t % eta) * len + t / eta;
  return ops::gather_rows(streams, Shape{nb, nt, streams.shape()[2]}, std::move(src));
}

// Streams of one phase across the batch: (B, L, D), rows b * eta + phase.
template <typename S>
Tensor<S> phase_streams(const Tensor<S>& streams, const DilationSpec& spec, std::size_t phase) {
  require(phase < spec.eta, "phase_streams: phase out of range");
  std::vector<std::size_t> idx(spec.batch);
  for (std::size_t b = 0; b < spec.batch; ++b) idx[b] = b * spec.eta + phase;
  return ops::gather(streams, 0, std::move(idx));
}

// Inverse of phase_streams over all phases: per-phase (B, L, D) outputs are
// interleaved back into (eta * B, L, D).
template <typename S>
Tensor<S> merge_phases(const std::vector<Tensor<S>>& per_phase, const DilationSpec& spec) {
  require(per_phase.size() == spec.eta, "merge_phases: expected one tensor per phase");
  Tensor<S> merged;
  for (std::size_t i = 0; i < spec.eta; ++i) {
    std::vector<std::size_t> idx(spec.batch);
    for (std::size_t b = 0; b < spec.batch; ++b) idx[b] = b * spec.eta + i;
    auto placed = ops::scatter(per_phase[i], 0, std::move(idx), spec.streams());
    merged = merged.defined() ? ops::add(merged, placed) : placed;
  }
  return merged;
}

}  // namespace temba
