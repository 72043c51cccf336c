#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>

#include "test_util.hpp"

namespace {

using namespace temba;
using temba::testing::randn;
using temba::testing::uniform;
using T = Tensor<double>;
using wide = boost::multiprecision::cpp_bin_float_50;

// (1/a)(e^{delta a} - 1) b evaluated with 50 significant digits.
double wide_bbar(double a, double b, double delta) {
  const wide wa = a, wb = b, wd = delta;
  return static_cast<double>(boost::multiprecision::expm1(wd * wa) / wa * wb);
}

TEST(Zoh, HalfLifeCase) {
  const auto z = discretize_zoh(-1.0, 1.0, std::log(2.0));
  EXPECT_NEAR(z.a_bar, 0.5, 1e-15);
  EXPECT_NEAR(z.b_bar, 0.5, 1e-15);
  EXPECT_NEAR(z.b_bar, wide_bbar(-1.0, 1.0, std::log(2.0)), 1e-15);
}

TEST(Zoh, VanishingStepLimit) {
  const auto z = discretize_zoh(-3.0, 2.0, 1e-300);
  EXPECT_EQ(z.a_bar, 1.0);
  EXPECT_NEAR(z.b_bar, 0.0, 1e-299);
}

TEST(Zoh, SeriesBranchMatchesWideDirectFormula) {
  for (double a : {-1.0, -7.5, -0.01}) {
    const double delta = 1e-8 / std::abs(a);  // |delta a| = 1e-8
    const auto z = discretize_zoh(a, 1.25, delta);
    const double oracle = wide_bbar(a, 1.25, delta);
    EXPECT_LE(std::abs(z.b_bar - oracle) / std::abs(oracle), 1e-9) << a;
    // b_bar -> delta b with relative gap |delta a| / 2 to leading order.
    EXPECT_LE(std::abs(z.b_bar - delta * 1.25) / (delta * 1.25), 1e-8);
  }
}

TEST(Zoh, ContinuousAcrossSeriesThreshold) {
  for (double x : {0.5e-6, 0.999e-6, 1.001e-6, 2e-6, 1e-3}) {
    const double a = -2.0, delta = x / 2.0;
    const auto z = discretize_zoh(a, 1.0, delta);
    const double oracle = wide_bbar(a, 1.0, delta);
    EXPECT_LE(std::abs(z.b_bar - oracle) / std::abs(oracle), 1e-12) << x;
  }
}

TEST(Zoh, NonPositiveStepRejected) {
  EXPECT_THROW(discretize_zoh(-1.0, 1.0, 0.0), ContractViolation);
  EXPECT_THROW(discretize_zoh(-1.0, 1.0, -0.1), ContractViolation);
}

// Frozen LTI scan: constant delta, A, B, C supplied directly.
struct Lti {
  std::size_t l, d, n;
  T u, delta, a, b, c;
};

Lti make_lti(std::size_t l, std::size_t d, std::size_t n, std::uint64_t seed) {
  Lti s{l, d, n, {}, {}, {}, {}, {}};
  Rng rng(seed);
  s.u = T::from({1, l, d}, rng.normal_vec<double>(l * d, 1.0));
  std::vector<double> dl(d), dv(l * d);
  for (auto& v : dl) v = rng.uniform(0.05, 0.8);
  for (std::size_t t = 0; t < l; ++t)
    for (std::size_t k = 0; k < d; ++k) dv[t * d + k] = dl[k];
  s.delta = T::from({1, l, d}, dv);
  s.a = T::from({d, n}, rng.uniform_vec<double>(d * n, -3.0, -0.2));
  std::vector<double> bn = rng.normal_vec<double>(n, 1.0), cn = rng.normal_vec<double>(n, 1.0), bv(l * n), cv(l * n);
  for (std::size_t t = 0; t < l; ++t)
    for (std::size_t j = 0; j < n; ++j) bv[t * n + j] = bn[j], cv[t * n + j] = cn[j];
  s.b = T::from({1, l, n}, bv);
  s.c = T::from({1, l, n}, cv);
  return s;
}

TEST(Scan, HandUnrolledLtiRecurrence) {
  // a = -1, delta = ln 2 -> a_bar = 0.5; B = 2 -> b_bar = 1; C = 1.
  const double ln2 = std::log(2.0);
  const auto y = scan(T::from({1, 3, 1}, {1, 0, 0}), T::full({1, 3, 1}, ln2), T::from({1, 1}, {-1.0}),
                      T::full({1, 3, 1}, 2.0), T::full({1, 3, 1}, 1.0));
  EXPECT_NEAR(y[0], 1.0, 1e-15);
  EXPECT_NEAR(y[1], 0.5, 1e-15);
  EXPECT_NEAR(y[2], 0.25, 1e-15);
}

TEST(Scan, ZeroInputGivesZeroOutput) {
  const auto s = make_lti(7, 3, 4, 1);
  const auto y = scan(T::zeros({1, 7, 3}), s.delta, s.a, s.b, s.c);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Scan, LtiMatchesConvolutionForm) {
  const auto s = make_lti(40, 3, 5, 2);
  const auto y = scan(s.u, s.delta, s.a, s.b, s.c);
  for (std::size_t t = 0; t < s.l; ++t)
    for (std::size_t d = 0; d < s.d; ++d) {
      long double acc = 0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const long double x = static_cast<long double>(s.delta[d]) * s.a[d * s.n + j];
        const long double abar = std::exp(x), bbar = std::expm1(x) / s.a[d * s.n + j] * s.b[j];
        for (std::size_t k = 0; k <= t; ++k)
          acc += s.c[j] * std::pow(abar, static_cast<long double>(t - k)) * bbar * s.u[k * s.d + d];
      }
      EXPECT_NEAR(y[t * s.d + d], static_cast<double>(acc), 1e-10) << t << "," << d;
    }
}

TEST(Scan, LtiLinearity) {
  const auto s = make_lti(30, 2, 4, 3);
  const auto u2 = randn({1, 30, 2}, 33, false);
  const double al = 0.7, be = -1.9;
  const auto lhs = scan(ops::add(ops::scale(s.u, al), ops::scale(u2, be)), s.delta, s.a, s.b, s.c);
  const auto y1 = scan(s.u, s.delta, s.a, s.b, s.c), y2 = scan(u2, s.delta, s.a, s.b, s.c);
  for (std::size_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], al * y1[i] + be * y2[i], 1e-10);
}

TEST(Scan, StateNormNonIncreasingWithoutInput) {
  // Drive for 3 steps, then zero input; read each state coordinate through a one-hot C.
  const std::size_t l = 20, n = 3;
  std::vector<double> uv(l, 0.0);
  uv[0] = 1.0, uv[1] = -2.0, uv[2] = 0.5;
  const auto u = T::from({1, l, 1}, uv);
  const auto a = T::from({1, n}, {-0.3, -1.0, -2.5});
  const auto b = T::full({1, l, n}, 1.0);
  std::vector<std::vector<double>> states(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> cv(l * n, 0.0);
    for (std::size_t t = 0; t < l; ++t) cv[t * n + j] = 1.0;
    states[j] = scan(u, T::full({1, l, 1}, 0.4), a, b, T::from({1, l, n}, cv)).vec();
  }
  for (std::size_t t = 3; t < l; ++t) {
    double prev = 0, cur = 0;
    for (std::size_t j = 0; j < n; ++j) prev += states[j][t - 1] * states[j][t - 1], cur += states[j][t] * states[j][t];
    EXPECT_LE(cur, prev) << t;
  }
}

TEST(Scan, NonFiniteStateNamesStep) {
  std::vector<double> uv{1.0, 1e200, 1.0};
  try {
    scan(T::from({1, 3, 1}, uv), T::full({1, 3, 1}, 0.5), T::from({1, 1}, {-1.0}), T::full({1, 3, 1}, 1e200),
         T::full({1, 3, 1}, 1.0));
    FAIL() << "expected NumericFault";
  } catch (const NumericFault& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
  }
}

TEST(Scan, RejectsNonNegativeStateAndStep) {
  const auto s = make_lti(4, 1, 1, 5);
  EXPECT_THROW(scan(s.u, s.delta, T::from({1, 1}, {0.0}), s.b, s.c), ContractViolation);
  EXPECT_THROW(scan(s.u, T::zeros({1, 4, 1}), s.a, s.b, s.c), ContractViolation);
}

TEST(Scan, GradientsMatchFiniteDifferences) {
  const auto u = randn({2, 6, 3}, 40);
  const auto delta = uniform({2, 6, 3}, 41, 0.05, 1.0);
  const auto a = uniform({3, 4}, 42, -2.0, -0.1);
  const auto b = randn({2, 6, 4}, 43), c = randn({2, 6, 4}, 44);
  const auto rep = temba::testing::check_op([&] { return scan(u, delta, a, b, c); }, {u, delta, a, b, c});
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " in " << rep.worst_param;
}

TEST(Scan, GradientsOnSeriesBranch) {
  // delta * |a| around 1e-7: inside the series branch; h must stay well below delta.
  const auto u = randn({1, 4, 2}, 45);
  const auto delta = uniform({1, 4, 2}, 46, 2e-7, 4e-7);
  const auto a = uniform({2, 3}, 47, -0.5, -0.2);
  const auto b = randn({1, 4, 3}, 48), c = randn({1, 4, 3}, 49);
  const auto rep =
      temba::testing::check_op([&] { return scan(u, delta, a, b, c); }, {u, b, c}, 1e-6, 1e-7);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
  const auto rep_d = temba::testing::check_op([&] { return scan(u, delta, a, b, c); }, {delta}, 1e-11, 1e-5);
  EXPECT_TRUE(rep_d.passed) << rep_d.max_rel_error;
}

// Independent per-step evaluation of the selective recurrence in long double.
std::vector<long double> oracle_selective(const ScanParams<double>& p, const T& u) {
  const std::size_t l = u.shape()[1], d = u.shape()[2], n = p.state_dim();
  std::vector<long double> h(d * n, 0), y(l * d, 0);
  for (std::size_t t = 0; t < l; ++t) {
    std::vector<long double> bt(n, 0), ct(n, 0), dt(d, 0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < d; ++k) {
        bt[j] += static_cast<long double>(u[t * d + k]) * p.w_b[k * n + j];
        ct[j] += static_cast<long double>(u[t * d + k]) * p.w_c[k * n + j];
      }
    for (std::size_t c = 0; c < d; ++c) {
      long double z = p.b_delta[c];
      for (std::size_t k = 0; k < d; ++k) z += static_cast<long double>(u[t * d + k]) * p.w_delta[k * d + c];
      dt[c] = std::log1p(std::exp(z));
    }
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t j = 0; j < n; ++j) {
        const long double a = -std::exp(static_cast<long double>(p.a_log[c * n + j]));
        const long double x = dt[c] * a;
        h[c * n + j] = std::exp(x) * h[c * n + j] + std::expm1(x) / a * bt[j] * u[t * d + c];
        y[t * d + c] += ct[j] * h[c * n + j];
      }
  }
  return y;
}

TEST(SelectiveScan, MatchesIndependentRecurrence) {
  Rng rng(50);
  const auto p = ScanParams<double>::init(3, 4, rng);
  const auto u = randn({1, 9, 3}, 51, false);
  const auto y = selective_scan(p, u);
  const auto o = oracle_selective(p, u);
  for (std::size_t i = 0; i < o.size(); ++i) EXPECT_NEAR(y[i], static_cast<double>(o[i]), 1e-12);
}

TEST(SelectiveScan, Causal) {
  Rng rng(52);
  const auto p = ScanParams<double>::init(3, 4, rng);
  const auto u = randn({1, 10, 3}, 53, false);
  const auto y0 = selective_scan(p, u);
  auto uv = u.vec();
  uv[6 * 3 + 1] += 0.5;
  const auto y1 = selective_scan(p, T::from(u.shape(), uv));
  for (std::size_t t = 0; t < 10; ++t) {
    bool changed = false;
    for (std::size_t d = 0; d < 3; ++d) changed = changed || y0[t * 3 + d] != y1[t * 3 + d];
    EXPECT_EQ(changed, t >= 6) << t;
  }
}

TEST(SelectiveScan, InitSpansStableRanges) {
  Rng rng(54);
  const auto p = ScanParams<double>::init(8, 16, rng);
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_NEAR(std::exp(p.a_log[c * 16]), 1.0, 1e-12);
    EXPECT_NEAR(std::exp(p.a_log[c * 16 + 15]), 16.0, 1e-12);
    const double ratio = std::exp(p.a_log[c * 16 + 1] - p.a_log[c * 16]);
    for (std::size_t s = 1; s < 16; ++s)
      EXPECT_NEAR(std::exp(p.a_log[c * 16 + s] - p.a_log[c * 16 + s - 1]), ratio, 1e-12);
    const double dt = std::log1p(std::exp(p.b_delta[c]));
    EXPECT_GE(dt, 1e-3 * (1 - 1e-9));
    EXPECT_LE(dt, 1e-1 * (1 + 1e-9));
  }
}

TEST(Bidirectional, PalindromeInSharedParamsOut) {
  Rng rng(60);
  const auto p = ScanParams<double>::init(2, 3, rng);
  const std::size_t l = 7;
  auto half = randn({1, 4, 2}, 61, false).vec();
  std::vector<double> uv(l * 2);
  for (std::size_t t = 0; t < l; ++t)
    for (std::size_t d = 0; d < 2; ++d) uv[t * 2 + d] = half[std::min(t, l - 1 - t) * 2 + d];
  const auto y = bidirectional_scan(p, p, T::from({1, l, 2}, uv));
  for (std::size_t t = 0; t < l; ++t)
    for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(y[t * 2 + d], y[(l - 1 - t) * 2 + d], 1e-14);
}

TEST(Bidirectional, ZeroedBackwardGeneratorsLeaveForwardScan) {
  Rng rng(62);
  const auto f = ScanParams<double>::init(3, 2, rng);
  auto b = ScanParams<double>::init(3, 2, rng);
  b.w_b = T::zeros({3, 2});
  b.w_c = T::zeros({3, 2});
  const auto u = randn({1, 6, 3}, 63, false);
  const auto y = bidirectional_scan(f, b, u), yf = selective_scan(f, u);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], yf[i]);
}

TEST(Bidirectional, SumOfTwoOraclesOnT5) {
  Rng rng(64);
  const auto f = ScanParams<double>::init(2, 3, rng), b = ScanParams<double>::init(2, 3, rng);
  const auto u = randn({1, 5, 2}, 65, false);
  const auto y = bidirectional_scan(f, b, u);
  const auto of = oracle_selective(f, u);
  const auto ob = oracle_selective(b, ops::reverse_time(u));
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t d = 0; d < 2; ++d)
      EXPECT_NEAR(y[t * 2 + d], static_cast<double>(of[t * 2 + d] + ob[(4 - t) * 2 + d]), 1e-12);
}

TEST(Branch, ShapeContractAtFullScale) {
  Rng rng(70);
  const auto p = SSMBranchParams<float>::init(576, 16, rng);
  NoGradGuard ng;
  const auto y = branch_forward(p, Tensor<float>::from({1, 2500, 576}, rng.normal_vec<float>(2500 * 576, 1.0)));
  EXPECT_EQ(y.shape(), Shape({1, 2500, 576}));
}

TEST(Branch, ZeroOutProjectionIsResidualIdentity) {
  Rng rng(71);
  auto p = SSMBranchParams<double>::init(4, 3, rng);
  p.w_out = T::zeros({4, 4});
  const auto u = randn({2, 6, 4}, 72, false);
  const auto y = branch_forward(p, u);
  for (std::size_t i = 0; i < u.numel(); ++i) EXPECT_EQ(y[i], u[i]);
}

TEST(Branch, WrongWidthRejected) {
  Rng rng(73);
  const auto p = SSMBranchParams<double>::init(4, 3, rng);
  EXPECT_THROW(branch_forward(p, T::zeros({1, 5, 3})), ContractViolation);
}

TEST(Branch, FiniteDifferenceOnToy) {
  Rng rng(74);
  const auto p = SSMBranchParams<double>::init(4, 3, rng);
  const auto u = randn({1, 6, 4}, 75);
  std::vector<T> params{u};
  std::vector<std::string> names{"u"};
  p.visit("", [&](const std::string& n, const T& t) {
    params.push_back(t);
    names.push_back(n);
  });
  const auto w = randn({1, 6, 4}, 76, false);
  const auto rep = finite_diff_check<double>([&] { return ops::sum(ops::mul(branch_forward(p, u), w)); }, params,
                                             1e-5, 1e-4, names);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at " << rep.worst_param;
}

}  // namespace
