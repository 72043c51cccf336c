#include <gtest/gtest.h>

#include <cstring>
#include <limits>

#include "test_util.hpp"

namespace {

using namespace temba;
using temba::testing::randn;
using T = Tensor<double>;

bool bitwise_equal(const T& a, const T& b) {
  return a.shape() == b.shape() && std::memcmp(a.vec().data(), b.vec().data(), a.numel() * sizeof(double)) == 0;
}

void fill(const T& t, double v) {
  for (auto& x : t.mutable_values()) x = v;
}

ModelConfig toy_config(std::size_t k = 3) {
  ToySpec s;
  s.blocks = k;
  s.d0 = 4;
  s.state_dim = 2;
  s.t = 9;
  s.num_classes = 3;
  s.input_dim = 5;
  return s.model_config();
}

TEST(ModelConfig, DefaultWidthLadder) {
  ModelConfig c;
  EXPECT_EQ(c.block_dims(), (std::vector<std::size_t>{256, 384, 576}));
  EXPECT_EQ(c.fuser_width(), 576u);
  c.blocks = 4;
  EXPECT_EQ(c.block_dims(), (std::vector<std::size_t>{256, 384, 576, 864}));
  c.blocks = 1;
  EXPECT_EQ(c.block_dims(), (std::vector<std::size_t>{256}));
}

TEST(ModelConfig, RoundHalfUp) {
  ModelConfig c;
  c.d0 = 5;  // 7.5 -> 8, 12 -> 12
  EXPECT_EQ(c.block_dims(), (std::vector<std::size_t>{5, 8, 12}));
}

TEST(ModelConfig, DilationPerBlock) {
  ModelConfig c = toy_config(4);
  Model<double> m(c);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(m.blocks()[k].branches.size(), k + 1);
  c.use_dilation = false;
  Model<double> flat(c);
  for (const auto& b : flat.blocks()) {
    EXPECT_EQ(b.eta, 1u);
    EXPECT_EQ(b.branches.size(), 1u);
  }
}

TEST(ModelConfig, DefaultParameterCountMatchesClosedForm) {
  ModelConfig c;
  Model<float> m(c);
  const std::size_t n = c.state_dim, cls = c.num_classes;
  auto branch = [n](std::size_t d) { return d + 3 * d * d + 4 * d + d + 2 * (n * d + d * d + d + 2 * d * n); };
  auto linear = [](std::size_t i, std::size_t o) { return i * o + o; };
  const auto dims = c.dims();
  std::size_t expect = linear(c.input_dim, c.d0);
  for (std::size_t k = 1; k <= 3; ++k) expect += linear(dims[k - 1], dims[k]) + k * branch(dims[k]) + linear(dims[k], cls);
  for (std::size_t k = 1; k <= 3; ++k) expect += linear(dims[k], 576);
  expect += branch(576) + linear(576, cls);
  EXPECT_EQ(m.parameter_count(), expect);
  EXPECT_LT(m.parameter_count(), 20'000'000u);
}

TEST(TembaBlock, FullScaleShapes) {
  ModelConfig c;
  c.t_pad = 2500;
  Model<float> m(c);
  Rng rng(1);
  NoGradGuard ng;
  auto z = Tensor<float>::from({1, 2500, 256}, rng.normal_vec<float>(2500 * 256, 1.0));
  const std::vector<std::size_t> widths{256, 384, 576};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto out = temba_block_forward(m.blocks()[k], z);
    EXPECT_EQ(out.z.shape(), Shape({1, 2500, widths[k]}));
    EXPECT_EQ(out.aux_logits.shape(), Shape({1, 2500, 51}));
    z = out.z;
  }
}

TEST(TembaBlock, EtaOneIsPlainBranch) {
  Model<double> m(toy_config(1));
  const auto& blk = m.blocks()[0];
  const auto x = randn({2, 7, 4}, 3, false);
  const auto out = temba_block_forward(blk, x);
  EXPECT_TRUE(bitwise_equal(out.z, branch_forward(blk.branches[0], blk.proj(x))));
}

TEST(TembaBlock, PhaseIsolation) {
  Model<double> m(toy_config(3));
  const auto& blk = m.blocks()[2];  // eta = 3, width 6
  const std::size_t d = blk.proj.w.shape()[0];
  const auto x = randn({1, 9, d}, 4, false);
  const auto base = temba_block_forward(blk, x).z;
  const std::size_t dout = base.shape()[2];
  for (std::size_t src = 0; src < 9; ++src) {
    auto v = x.vec();
    v[src * d] += 0.3;
    const auto pert = temba_block_forward(blk, T::from(x.shape(), v)).z;
    for (std::size_t t = 0; t < 9; ++t) {
      bool changed = false;
      for (std::size_t c = 0; c < dout; ++c) changed = changed || pert[t * dout + c] != base[t * dout + c];
      EXPECT_EQ(changed, t % 3 == src % 3) << "src " << src << " t " << t;
    }
  }
}

TEST(TembaBlock, MatchesBranchesOnStridedSubsequences) {
  Model<double> m(toy_config(2));
  const auto& blk = m.blocks()[1];  // eta = 2
  const std::size_t d = blk.proj.w.shape()[0];
  const auto x = randn({1, 8, d}, 5, false);
  const auto z = temba_block_forward(blk, x).z;
  const auto px = blk.proj(x);
  const std::size_t w = px.shape()[2];
  for (std::size_t phase = 0; phase < 2; ++phase) {
    std::vector<double> sub;
    for (std::size_t t = phase; t < 8; t += 2) sub.insert(sub.end(), px.vec().begin() + t * w, px.vec().begin() + (t + 1) * w);
    const auto y = branch_forward(blk.branches[phase], T::from({1, 4, w}, sub));
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t c = 0; c < w; ++c) EXPECT_EQ(z[((phase + 2 * j) * w) + c], y[j * w + c]);
  }
}

TEST(TembaBlock, NumericFaultNamesBlock) {
  Model<double> m(toy_config(3));
  fill(m.blocks()[1].proj.w, std::numeric_limits<double>::infinity());
  const auto prob = make_toy_problem<double>(m.config(), 1, 9, 0, 6);
  try {
    m.forward(prob.features);
    FAIL() << "expected NumericFault";
  } catch (const NumericFault& e) {
    EXPECT_EQ(std::string(e.what()).rfind("block 2: ", 0), 0u) << e.what();
  }
}

TEST(Fuser, ZeroWeightsGiveZeroOutput) {
  Model<double> m(toy_config(3));
  auto& f = m.fuser();
  for (auto& p : f.projections) fill(p.w, 0.0), fill(p.b, 0.0);
  fill(f.ssm.w_out, 0.0);
  const auto out = m.forward(randn({1, 9, 5}, 7, false));
  const auto y = ms_fuser_forward(f, out.block_outputs);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Fuser, SumEqualsConcatWithStackedProjection) {
  Model<double> m(toy_config(3));
  const auto& f = m.fuser();
  const auto out = m.forward(randn({2, 9, 5}, 8, false));
  Fuser<double> cat;
  cat.concat_mode = true;
  cat.has_ssm = true;
  cat.ssm = f.ssm;
  std::vector<double> w, b(f.projections[0].b.numel(), 0.0);
  for (const auto& p : f.projections) {
    w.insert(w.end(), p.w.vec().begin(), p.w.vec().end());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += p.b[i];
  }
  const std::size_t rows = w.size() / b.size();
  cat.concat = {T::from({rows, b.size()}, w), T::from({b.size()}, b)};
  const auto ys = ms_fuser_forward(f, out.block_outputs), yc = ms_fuser_forward(cat, out.block_outputs);
  for (std::size_t i = 0; i < ys.numel(); ++i) EXPECT_NEAR(ys[i], yc[i], 1e-12);
}

TEST(Fuser, RemovingFuserLeavesAuxLogits) {
  auto c = toy_config(3);
  Model<double> with(c);
  c.use_fuser = false;
  Model<double> without(c);
  const auto x = randn({1, 9, 5}, 9, false);
  const auto a = with.forward(x), b = without.forward(x);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_TRUE(bitwise_equal(a.aux_logits[k], b.aux_logits[k]));
  EXPECT_EQ(b.logits.shape(), Shape({1, 9, 3}));
}

TEST(Fuser, VariantsBuildExpectedParameters) {
  for (auto v : {FuserVariant::sum_proj, FuserVariant::sum_proj_ssm, FuserVariant::concat_proj,
                 FuserVariant::concat_proj_ssm}) {
    auto c = toy_config(3);
    c.fuser_variant = v;
    Model<double> m(c);
    bool has_ssm = false, has_concat = false, has_proj = false;
    for (const auto& [name, t] : m.named_parameters()) {
      has_ssm = has_ssm || name.rfind("fuser.ssm.", 0) == 0;
      has_concat = has_concat || name.rfind("fuser.concat.", 0) == 0;
      has_proj = has_proj || name.rfind("fuser.proj", 0) == 0;
    }
    const bool concat = v == FuserVariant::concat_proj || v == FuserVariant::concat_proj_ssm;
    EXPECT_EQ(has_concat, concat) << to_string(v);
    EXPECT_EQ(has_proj, !concat) << to_string(v);
    EXPECT_EQ(has_ssm, v == FuserVariant::sum_proj_ssm || v == FuserVariant::concat_proj_ssm) << to_string(v);
    EXPECT_EQ(m.forward(randn({1, 9, 5}, 10, false)).logits.shape(), Shape({1, 9, 3}));
  }
}

TEST(Heads, ZeroClassifierGivesHalf) {
  Model<double> m(toy_config(2));
  fill(m.head().w, 0.0);
  const auto out = m.forward(randn({1, 9, 5}, 11, false));
  const auto probs = classification_probs(out.logits);
  for (double p : probs.values()) EXPECT_EQ(p, 0.5);
}

TEST(Heads, SigmoidIsPerClassMonotone) {
  const auto z = T::from({1, 1, 3}, {0.2, -1.0, 3.0});
  const auto z2 = T::from({1, 1, 3}, {0.2, -0.5, 3.0});
  const auto p = classification_probs(z), p2 = classification_probs(z2);
  EXPECT_EQ(p[0], p2[0]);
  EXPECT_GT(p2[1], p[1]);
  EXPECT_EQ(p[2], p2[2]);
}

TEST(Heads, ConstantRegressionHead) {
  auto c = toy_config(2);
  c.mode = Mode::summarization;
  Model<double> m(c);
  fill(m.head().w, 0.0);
  fill(m.head().b, 0.3);
  const auto out = m.forward(randn({1, 9, 5}, 12, false));
  EXPECT_EQ(out.logits.shape(), Shape({1, 9, 1}));
  for (double s : out.logits.values()) EXPECT_EQ(s, 0.3);
}

TEST(Model, DeterministicForSeed) {
  Model<double> a(toy_config(3)), b(toy_config(3));
  const auto x = randn({1, 9, 5}, 13, false);
  EXPECT_TRUE(bitwise_equal(a.forward(x).logits, b.forward(x).logits));
  auto c = toy_config(3);
  c.seed = 1;
  Model<double> other(c);
  EXPECT_FALSE(bitwise_equal(a.forward(x).logits, other.forward(x).logits));
}

TEST(Model, PaddedFrameContentDoesNotLeak) {
  Model<double> m(toy_config(3));
  const auto prob = make_toy_problem<double>(m.config(), 1, 9, 3, 14);
  auto v = prob.features.vec();
  for (std::size_t t = 6; t < 9; ++t)
    for (std::size_t c = 0; c < 5; ++c) v[t * 5 + c] = 1e3 * (c + 1.0);
  const auto a = m.forward(prob.features, &prob.mask), b = m.forward(T::from(prob.features.shape(), v), &prob.mask);
  EXPECT_TRUE(bitwise_equal(a.logits, b.logits));
}

TEST(Model, WrongFeatureWidthRejected) {
  Model<double> m(toy_config(2));
  EXPECT_THROW(m.forward(T::zeros({1, 9, 4})), ContractViolation);
}

TEST(Model, LinearBaselineIsPerFrame) {
  auto c = toy_config(2);
  c.arch = Arch::linear;
  Model<double> m(c);
  const auto names = m.named_parameters();
  ASSERT_EQ(names.size(), 2u);
  EXPECT_EQ(names[0].first, "head.b");
  const auto x = randn({1, 9, 5}, 15, false);
  auto v = x.vec();
  v[4 * 5] += 1.0;
  const auto a = m.forward(x).logits, b = m.forward(T::from(x.shape(), v)).logits;
  for (std::size_t t = 0; t < 9; ++t)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a[t * 3 + j] != b[t * 3 + j], t == 4);
}

struct VariantCase {
  FuserVariant variant;
  Mode mode;
  bool dilation;
};

class ModelGrad : public ::testing::TestWithParam<VariantCase> {};

TEST_P(ModelGrad, FullObjectiveMatchesFiniteDifferences) {
  ToySpec s;
  s.blocks = 2;
  s.d0 = 4;
  s.state_dim = 2;
  s.t = 6;
  s.num_classes = 2;
  s.input_dim = 3;
  auto c = s.model_config();
  c.fuser_variant = GetParam().variant;
  c.mode = GetParam().mode;
  c.use_dilation = GetParam().dilation;
  Model<double> m(c);
  const auto prob = make_toy_problem<double>(c, 1, s.t, 1, 16);
  const auto rep = gradcheck_model(m, prob, kModelGradStep, 1e-4);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error << " at " << rep.worst_param;
}

INSTANTIATE_TEST_SUITE_P(Variants, ModelGrad,
                         ::testing::Values(VariantCase{FuserVariant::sum_proj_ssm, Mode::detection, true},
                                           VariantCase{FuserVariant::sum_proj, Mode::detection, true},
                                           VariantCase{FuserVariant::concat_proj, Mode::detection, false},
                                           VariantCase{FuserVariant::concat_proj_ssm, Mode::summarization, true}));

}  // namespace
