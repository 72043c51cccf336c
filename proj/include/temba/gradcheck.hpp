#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "temba/ops.hpp"
#include "temba/tensor.hpp"

namespace temba {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
  std::size_t params_checked = 0;
  std::size_t params_excluded = 0;  // frozen leaves
  double tol = 0.0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
// gradient is ~0 from dominating through rounding noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Central difference stencils over D_m = f(p+mh) - f(p-mh):
//   second order  D_1 / 2h
//   fourth order  (8 D_1 - D_2) / 12h
//   sixth order   (45 D_1 - 9 D_2 + D_3) / 60h
// Wider stencils keep truncation error below tolerance at steps large enough
// to stay clear of roundoff.
enum class Stencil { second_order, fourth_order, sixth_order };

// Compares tape gradients of f = sum of terms() against central differences
// at every coordinate of every parameter that requires a gradient. The difference is accumulated term by term so a large constant
// term does not swamp the others in rounding. `terms` must be deterministic
// and rebuild its graph on each call.
template <typename S>
GradCheckReport finite_diff_check_terms(const std::function<std::vector<Tensor<S>>()>& terms,
                                        const std::vector<Tensor<S>>& params, double h, double tol,
                                        const std::vector<std::string>& names = {},
                                        Stencil stencil = Stencil::second_order) {
  require(h > 0.0, "finite_diff_check: step must be positive");
  GradCheckReport report;
  report.tol = tol;

  for (const auto& p : params) p.zero_grad();
  {
    const auto parts = terms();
    require(!parts.empty(), "finite_diff_check: no terms");
    Tensor<S> total = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) total = ops::add(total, parts[i]);
    backward(total);
  }

  NoGradGuard no_grad;
  auto values_of = [&terms]() {
    std::vector<S> v;
    for (const auto& t : terms()) v.push_back(t.item());
    return v;
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k];
    if (!p.requires_grad()) {
      ++report.params_excluded;
      continue;
    }
    ++report.params_checked;
    const std::vector<S> analytic = p.has_grad() ? std::vector<S>(p.grad().begin(), p.grad().end())
                                                 : std::vector<S>(p.numel(), S(0));
    auto values = p.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const S orig = values[i];
      // term-wise f(p + m h) - f(p - m h)
      auto span_diff = [&](double m) {
        values[i] = orig + static_cast<S>(m * h);
        const auto fp = values_of();
        values[i] = orig - static_cast<S>(m * h);
        const auto fm = values_of();
        values[i] = orig;
        S diff = S(0);
        for (std::size_t t = 0; t < fp.size(); ++t) diff += fp[t] - fm[t];
        return static_cast<double>(diff);
      };
      double numeric = 0.0;
      switch (stencil) {
        case Stencil::second_order: numeric = span_diff(1.0) / (2.0 * h); break;
        case Stencil::fourth_order: numeric = (8.0 * span_diff(1.0) - span_diff(2.0)) / (12.0 * h); break;
        case Stencil::sixth_order:
          numeric = (45.0 * span_diff(1.0) - 9.0 * span_diff(2.0) + span_diff(3.0)) / (60.0 * h);
          break;
      }
      const double a = static_cast<double>(analytic[i]);
      const double rel = relative_error(a, numeric);
      report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
      if (report.coords_checked == 0 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = k < names.size() ? names[k] : "param#" + std::to_string(k);
        report.worst_index = i;
      }
      ++report.coords_checked;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

template <typename S>
GradCheckReport finite_diff_check(const std::function<Tensor<S>()>& f, const std::vector<Tensor<S>>& params,
                                  double h, double tol, const std::vector<std::string>& names = {}) {
  return finite_diff_check_terms<S>([&f]() { return std::vector<Tensor<S>>{f()}; }, params, h, tol, names);
}

}  // namespace temba
