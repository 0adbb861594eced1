// Copyright 2026 The flashsr-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "flashsr/diffusion/diffusion.hpp"
#include "flashsr/error.hpp"
#include "gaussian.hpp"
#include "oracles.hpp"

namespace flashsr::diffusion {
namespace {

torch::Tensor randn(std::vector<int64_t> shape, uint64_t seed) {
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randn(shape, gen, torch::kFloat64);
}

TEST(Schedule, VariancePreservingAndMonotone) {
  NoiseSchedule s;
  double prev = 2.0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = i / 1000.0;
    EXPECT_NEAR(s.alpha(t) * s.alpha(t) + s.sigma(t) * s.sigma(t), 1.0, 1e-6);
    EXPECT_LE(s.alpha(t), prev);
    prev = s.alpha(t);
  }
  EXPECT_EQ(s.alpha(0.0), 1.0);
  EXPECT_EQ(s.sigma(0.0), 0.0);
  EXPECT_NEAR(s.alpha(1.0), 0.0, 1e-15);
  EXPECT_THROW(NoiseSchedule(0), InvalidArgument);
}

TEST(Schedule, TensorFormBroadcasts) {
  NoiseSchedule s;
  auto t = torch::tensor({0.0, 0.5, 1.0}, torch::kFloat64);
  auto a = s.alpha(t, 4);
  EXPECT_EQ(a.sizes(), (std::vector<int64_t>{3, 1, 1, 1}));
  EXPECT_NEAR(a[1].item<double>(), std::cos(std::numbers::pi / 4), 1e-12);
}

TEST(Forward, EndpointsAndVariance) {
  NoiseSchedule s;
  auto z0 = randn({100000}, 1);
  auto eps = randn({100000}, 2);
  EXPECT_TRUE(torch::equal(diffuse_forward(s, z0, 0.0, eps), z0));
  EXPECT_LT((diffuse_forward(s, z0, 1.0, eps) - eps).abs().max().item<double>(), 1e-12);
  for (double t : {0.1, 0.37, 0.5, 0.9}) {
    // 1e5 draws: standard error of the sample variance is about 0.0045.
    EXPECT_NEAR(diffuse_forward(s, z0, t, eps).var().item<double>(), 1.0, 0.02) << t;
  }
  EXPECT_THROW(diffuse_forward(s, z0, 0.5, randn({3}, 3)), InvalidArgument);
  EXPECT_THROW(diffuse_forward(s, z0, 1.5, eps), InvalidArgument);
}

TEST(Forward, VRoundTrips) {
  NoiseSchedule s;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    auto z0 = randn({2, 4, 3, 5}, 10 + i);
    auto eps = randn({2, 4, 3, 5}, 1000 + i);
    const double t = u(rng);
    auto zt = diffuse_forward(s, z0, t, eps);
    auto v = v_target(s, z0, eps, t);
    EXPECT_LT((x0_from_v(s, zt, v, t) - z0).abs().max().item<double>(), 1e-5);
    EXPECT_LT((eps_from_v(s, zt, v, t) - eps).abs().max().item<double>(), 1e-5);
    // Brute substitution.
    const double a = std::cos(std::numbers::pi * t / 2), sg = std::sin(std::numbers::pi * t / 2);
    EXPECT_LT((v - (a * eps - sg * z0)).abs().max().item<double>(), 1e-12);
  }
  auto z0 = randn({4}, 1), eps = randn({4}, 2);
  EXPECT_TRUE(torch::equal(v_target(s, z0, eps, 0.0), eps));
  EXPECT_TRUE(torch::equal(x0_from_v(s, z0, eps, 0.0), z0));
}

TEST(Forward, PerSampleTimesteps) {
  NoiseSchedule s;
  auto z0 = randn({3, 2, 2, 2}, 5), eps = randn({3, 2, 2, 2}, 6);
  auto t = torch::tensor({0.1, 0.5, 0.9}, torch::kFloat64);
  auto zt = diffuse_forward(s, z0, t, eps);
  for (int b = 0; b < 3; ++b) {
    const double tb = t[b].item<double>();
    auto want = diffuse_forward(s, z0[b].unsqueeze(0), tb, eps[b].unsqueeze(0));
    EXPECT_LT((zt[b] - want[0]).abs().max().item<double>(), 1e-12);
  }
}

TEST(Score, StandardNormalDataGivesMinusZ) {
  // x0 ~ N(0, 1) => z_t ~ N(0, 1) and the exact score is -z_t.
  NoiseSchedule s;
  auto z = randn({64, 1}, 7);
  for (double t : {0.2, 0.6, 1.0}) {
    auto tt = torch::full({64}, t, torch::kFloat64);
    auto v = testing::gaussian_v(z, tt, 0.0, 1.0);
    auto score = score_from_eps(s, eps_from_v(s, z, v, t), t);
    EXPECT_LT((score + z).abs().max().item<double>(), 1e-9) << t;
  }
  EXPECT_THROW(score_from_eps(s, z, 0.0), UndefinedScore);
}

TEST(Guidance, CfgCombine) {
  auto c = torch::ones({1}, torch::kFloat64), u = torch::zeros({1}, torch::kFloat64);
  EXPECT_EQ(cfg_combine(c, u, 4.0).item<double>(), 4.0);
  auto vc = randn({10}, 1), vu = randn({10}, 2);
  EXPECT_TRUE(torch::equal(cfg_combine(vc, vu, 1.0), vc));
  EXPECT_TRUE(torch::equal(cfg_combine(vc, vu, 0.0), vu));
  // omega and 1 - omega swap roles.
  EXPECT_LT((cfg_combine(vc, vu, 0.3) - cfg_combine(vu, vc, 0.7)).abs().max().item<double>(),
            1e-12);
  EXPECT_THROW(cfg_combine(vc, vu, -0.5), InvalidArgument);
}

TEST(Guidance, GuidedVCallsUncondWithUndefinedCond) {
  int cond_calls = 0, uncond_calls = 0;
  VPredictor m = [&](const torch::Tensor& z, const torch::Tensor&, const torch::Tensor& c) {
    (c.defined() ? cond_calls : uncond_calls)++;
    return c.defined() ? z + 1.0 : z;
  };
  auto z = torch::zeros({2, 1}, torch::kFloat64);
  auto v = guided_v(m, z, 0.5, z, 3.0);
  EXPECT_EQ(cond_calls, 1);
  EXPECT_EQ(uncond_calls, 1);
  EXPECT_NEAR(v[0][0].item<double>(), 3.0, 1e-12);
}

TEST(Ode, StepToZeroReturnsX0Estimate) {
  NoiseSchedule s;
  auto z = randn({5, 3}, 1), v = randn({5, 3}, 2);
  EXPECT_LT((ode_step(s, z, v, 0.7, 0.0) - x0_from_v(s, z, v, 0.7)).abs().max().item<double>(),
            1e-12);
  EXPECT_THROW(ode_step(s, z, v, 0.5, 0.5), InvalidArgument);
  EXPECT_THROW(ode_step(s, z, v, 0.4, 0.5), InvalidArgument);
}

TEST(Ode, DeltaDataRecoveredInOneStep) {
  // x0 = 0.7 deterministically: the exact v is the sd -> 0 limit.
  NoiseSchedule s;
  auto z = randn({20, 1}, 3);
  for (double t : {0.3, 0.8, 1.0}) {
    auto v = testing::gaussian_v(z, torch::full({20}, t, torch::kFloat64), 0.7, 0.0);
    auto out = ode_step(s, z, v, t, 0.0);
    EXPECT_LT((out - 0.7).abs().max().item<double>(), 1e-9) << t;
  }
}

TEST(Ode, SmallStepMovesLittle) {
  NoiseSchedule s;
  auto z = randn({10}, 1), v = randn({10}, 2);
  double prev = 1e9;
  for (double d : {1e-2, 1e-3, 1e-4}) {
    const double change = (ode_step(s, z, v, 0.5, 0.5 - d) - z).abs().max().item<double>();
    EXPECT_LT(change, 10.0 * d);
    EXPECT_LT(change, prev);
    prev = change;
  }
}

TEST(Ode, TrajectoriesAreDeterministic) {
  NoiseSchedule s;
  auto model = testing::gaussian_predictor(0.5, 0.3);
  auto z = randn({50, 1}, 8);
  for (auto kind : {SolverKind::kDdim, SolverKind::kDpmSolver2M}) {
    auto a = sample(s, model, z, uniform_grid(1.0, 16), {}, 1.0, kind);
    auto b = sample(s, model, z, uniform_grid(1.0, 16), {}, 1.0, kind);
    EXPECT_TRUE(torch::equal(a, b));
  }
}

TEST(Ode, UniformGrid) {
  const auto g = uniform_grid(0.75, 3);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_DOUBLE_EQ(g.front(), 0.75);
  EXPECT_DOUBLE_EQ(g[1], 0.5);
  EXPECT_DOUBLE_EQ(g.back(), 0.0);
  EXPECT_THROW(uniform_grid(1.0, 0), InvalidArgument);
}

TEST(Ode, DdimOnStandardNormalShrinksByCosineProduct) {
  // For x0 ~ N(0, 1) every marginal is N(0, 1) and the exact flow is the
  // identity; one exact-v DDIM step maps z to cos(theta_from - theta_to) z.
  NoiseSchedule s;
  auto z = randn({100, 1}, 11);
  for (int n : {1, 8, 32}) {
    auto x = sample(s, testing::gaussian_predictor(0.0, 1.0), z, uniform_grid(1.0, n), {}, 1.0);
    const double factor = std::pow(std::cos(std::numbers::pi / (2.0 * n)), n);
    EXPECT_LT((x - factor * z).abs().max().item<double>(), 1e-9) << n;
  }
}

TEST(Ode, DpmSolverTerminalDistributionPassesKs) {
  NoiseSchedule s;
  const double mu = 1.5, sd = 0.4;
  auto z = randn({10000, 1}, 9);
  auto x = sample(s, testing::gaussian_predictor(mu, sd), z, uniform_grid(1.0, 32), {}, 1.0,
                  SolverKind::kDpmSolver2M);
  std::vector<double> xs(x.data_ptr<double>(), x.data_ptr<double>() + x.numel());
  EXPECT_GT(testing::ks_normal_pvalue(xs, mu, sd), 0.01);
}

TEST(Ode, SecondOrderSolverIsMoreAccurate) {
  // Same initial noise; compare each solver's 8-step endpoint to a 1000-step
  // DDIM reference.
  NoiseSchedule s;
  auto model = testing::gaussian_predictor(-0.5, 0.2);
  auto z = randn({200, 1}, 10);
  auto ref = sample(s, model, z, uniform_grid(1.0, 1000), {}, 1.0);
  auto ddim = sample(s, model, z, uniform_grid(1.0, 8), {}, 1.0, SolverKind::kDdim);
  auto dpm = sample(s, model, z, uniform_grid(1.0, 8), {}, 1.0, SolverKind::kDpmSolver2M);
  EXPECT_LT((dpm - ref).abs().mean().item<double>(), (ddim - ref).abs().mean().item<double>());
}

TEST(TimestepDist, DefaultModesAndClipping) {
  auto pi = TimestepDistribution::few_step_default();
  ASSERT_EQ(pi.modes.size(), 4u);
  EXPECT_DOUBLE_EQ(pi.modes[0].center, 0.25);
  EXPECT_DOUBLE_EQ(pi.modes[3].center, 1.0);
  EXPECT_DOUBLE_EQ(pi.modes[2].stddev, 0.1);
  std::mt19937_64 rng(1);
  int near_one = 0;
  for (int i = 0; i < 20000; ++i) {
    const double t = pi.sample(rng);
    ASSERT_GE(t, 0.0);
    ASSERT_LE(t, 1.0);
    near_one += t == 1.0;
  }
  // Half of the t = 1 mode lands above 1 and is clipped: about 1/8 of draws.
  EXPECT_NEAR(near_one / 20000.0, 0.125, 0.01);
}

TEST(TimestepDist, SingleModeStatisticsAndValidation) {
  TimestepDistribution pi{{{0.5, 0.05}}, {1.0}};
  std::mt19937_64 rng(2);
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double t = pi.sample(rng);
    sum += t;
    sq += t * t;
  }
  const double mean = sum / 20000, var = sq / 20000 - mean * mean;
  EXPECT_NEAR(mean, 0.5, 0.002);
  EXPECT_NEAR(std::sqrt(var), 0.05, 0.002);
  EXPECT_THROW((TimestepDistribution{{{0.5, 0.1}}, {0.7}}.validate()), InvalidArgument);
  EXPECT_THROW((TimestepDistribution{{{0.5, 0.1}}, {0.5, 0.5}}.validate()), InvalidArgument);
}

}  // namespace
}  // namespace flashsr::diffusion
