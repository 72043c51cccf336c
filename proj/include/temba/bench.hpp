#pragma once

// Wall-clock timing of one Temba block (standard scan, eta = 1, versus a
// dilated scan) as sequence length doubles.

#include <chrono>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>
#include "temba/model.hpp"
#include "temba/ops.hpp"

namespace temba {

struct BenchSpec {
  std::vector<std::size_t> lengths{512, 1024, 2048, 4096};
  std::size_t width = 32;
  std::size_t state_dim = 16;
  std::size_t dilated_eta = 3;
  std::size_t runs = 5;
  double min_run_s = 0.1;  // each forward run repeats the call until this much time has passed
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::size_t t = 0;
  std::size_t eta = 1;
  double forward_s = 0.0;   // per call, mean over runs
  double backward_s = 0.0;  // forward + backward, mean over runs
  double frames_per_s = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  // time(2T)/time(T) for consecutive lengths, forward only, per eta.
  std::vector<double> standard_ratios, dilated_ratios;
  double max_forward_ratio() const {
    double m = 0;
    for (double r : standard_ratios) m = std::max(m, r);
    for (double r : dilated_ratios) m = std::max(m, r);
    return m;
  }
};

template <typename S>
BenchRow bench_block(std::size_t t, std::size_t eta, const BenchSpec& spec) {
  using clock = std::chrono::steady_clock;
  Rng rng(spec.seed);
  TembaBlock<S> blk;
  blk.eta = eta;
  blk.proj = Linear<S>::init(spec.width, spec.width, rng);
  for (std::size_t i = 0; i < eta; ++i) blk.branches.push_back(SSMBranchParams<S>::init(spec.width, spec.state_dim, rng));
  blk.aux_head = Linear<S>::init(spec.width, 1, rng);
  const auto x = Tensor<S>::from({1, t, spec.width}, rng.normal_vec<S>(t * spec.width, 1.0), true);

  BenchRow row{t, eta};
  {
    // Untimed warm-up so first-touch allocation at this length is not timed.
    NoGradGuard ng;
    temba_block_forward(blk, x);
  }
  for (std::size_t r = 0; r < spec.runs; ++r) {
    {
      NoGradGuard ng;
      const auto t0 = clock::now();
      std::size_t calls = 0;
      double elapsed = 0.0;
      do {
        temba_block_forward(blk, x);
        ++calls;
        elapsed = std::chrono::duration<double>(clock::now() - t0).count();
      } while (elapsed < spec.min_run_s);
      row.forward_s += elapsed / static_cast<double>(calls);
    }
    const auto t0 = clock::now();
    const auto out = temba_block_forward(blk, x);
    backward(ops::mean(out.z));
    row.backward_s += std::chrono::duration<double>(clock::now() - t0).count();
  }
  row.forward_s /= static_cast<double>(spec.runs);
  row.backward_s /= static_cast<double>(spec.runs);
  row.frames_per_s = static_cast<double>(t) / row.forward_s;
  return row;
}

template <typename S>
BenchReport run_bench(const BenchSpec& spec) {
  require(spec.runs >= 1 && !spec.lengths.empty(), "bench: need at least one run and one length");
  BenchReport rep;
  for (std::size_t eta : {std::size_t{1}, spec.dilated_eta}) {
    std::vector<double> fwd;
    for (std::size_t t : spec.lengths) {
      rep.rows.push_back(bench_block<S>(t, eta, spec));
      fwd.push_back(rep.rows.back().forward_s);
    }
    auto& ratios = eta == 1 ? rep.standard_ratios : rep.dilated_ratios;
    for (std::size_t i = 1; i < fwd.size(); ++i) ratios.push_back(fwd[i] / fwd[i - 1]);
  }
  return rep;
}

inline nlohmann::json to_json(const BenchReport& r) {
  auto rows = nlohmann::json::array();
  for (const auto& x : r.rows)
    rows.push_back({{"T", x.t},
                    {"eta", x.eta},
                    {"forward_s", x.forward_s},
                    {"forward_backward_s", x.backward_s},
                    {"frames_per_s", x.frames_per_s}});
  return {{"rows", rows}, {"standard_ratios", r.standard_ratios}, {"dilated_ratios", r.dilated_ratios}};
}

}  // namespace temba
