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

#include <fstream>
#include <numbers>

#include "flashsr/denoiser/denoiser.hpp"
#include "flashsr/diffusion/diffusion.hpp"
#include "flashsr/distill/distill.hpp"
#include "flashsr/error.hpp"
#include "flashsr/io/checkpoint.hpp"
#include "gaussian.hpp"
#include "scratch.hpp"

namespace flashsr::distill {
namespace {

using diffusion::NoiseSchedule;

denoiser::DenoiserConfig tiny_config() {
  denoiser::DenoiserConfig c;
  c.latent_channels = 2;
  c.widths = {8, 8, 16};
  c.time_dim = 8;
  c.heads = 2;
  return c;
}

torch::Tensor randn(std::vector<int64_t> shape, uint64_t seed) {
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randn(shape, gen);
}

DistillConfig small_config() {
  auto cfg = DistillConfig::desk();
  cfg.ramp_period = 1;
  cfg.ramp_end = 2;
  cfg.batch_size = 3;
  cfg.teacher_grid_points = 4;
  return cfg;
}

TEST(Schedule, FullScaleStaircase) {
  const DistillConfig cfg;
  EXPECT_EQ(cfg.omega, 4.0);
  auto at = [&](int64_t s) { return lambda_schedule(s, cfg); };
  EXPECT_EQ(at(0).adv, 0.0);
  EXPECT_EQ(at(4999).dmd, 0.0);
  EXPECT_DOUBLE_EQ(at(5000).adv, 0.3 * 0.25);
  EXPECT_DOUBLE_EQ(at(5000).dmd, 0.7 * 0.25);
  EXPECT_DOUBLE_EQ(at(12345).dmd, 0.7 * 0.5);
  EXPECT_DOUBLE_EQ(at(19999).adv, 0.3 * 0.75);
  EXPECT_EQ(at(20000).adv, 0.3);
  EXPECT_EQ(at(20000).dmd, 0.7);
  EXPECT_EQ(at(1000000).dmd, 0.7);
  double prev = -1.0;
  for (int64_t s = 0; s <= 25000; s += 250) {
    const auto w = at(s);
    EXPECT_GE(w.adv, 0.0);
    EXPECT_GE(w.dmd, prev);
    prev = w.dmd;
  }
}

TEST(Schedule, ConfigValidation) {
  auto cfg = DistillConfig::desk();
  cfg.ramp_end = 7000;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = DistillConfig::desk();
  cfg.lambda_dmd_final = -0.1;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = DistillConfig::desk();
  cfg.t_double_prime_set.clear();
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  const auto p = DistillConfig::paper();
  EXPECT_EQ(p.lr, 1e-5);
  EXPECT_EQ(p.batch_size, 16);
  EXPECT_EQ(p.lambda_adv_final, 0.3);
  EXPECT_EQ(p.lambda_dmd_final, 0.7);
  EXPECT_EQ(p.ramp_end, 20000);
  EXPECT_EQ(p.omega, 4.0);
  EXPECT_EQ(p.solver, diffusion::SolverKind::kDpmSolver2M);
  EXPECT_EQ(p.total_steps, 30000);
}

TEST(Grid, PointsAndSnapping) {
  const auto g = teacher_grid(8);
  ASSERT_EQ(g.size(), 9u);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[2], 0.25);
  EXPECT_EQ(g[8], 1.0);
  EXPECT_EQ(snap_to_grid(0.0, 8), 1);
  EXPECT_EQ(snap_to_grid(0.26, 8), 2);
  EXPECT_EQ(snap_to_grid(1.0, 8), 8);
  EXPECT_EQ(snap_to_grid(0.74, 4), 3);
}

TEST(TeacherTarget, SingleStepIsOneSolverStep) {
  NoiseSchedule s;
  auto model = testing::gaussian_predictor(0.3, 0.7);
  auto z = randn({5, 1}, 1).to(torch::kFloat64);
  const auto grid = teacher_grid(4);
  auto got = teacher_target(model, s, z, 1, {}, 1.0, grid);
  auto v = model(z, torch::full({5}, 0.25, torch::kFloat64), {});
  EXPECT_LT((got - diffusion::ode_step(s, z, v, 0.25, 0.0)).abs().max().item<double>(), 1e-12);
  EXPECT_THROW(teacher_target(model, s, z, 0, {}, 1.0, grid), InvalidArgument);
  EXPECT_THROW(teacher_target(model, s, z, 5, {}, 1.0, grid), InvalidArgument);
}

TEST(TeacherTarget, DeltaDataRecoveredFromEveryIndex) {
  NoiseSchedule s;
  auto model = testing::gaussian_predictor(-0.4, 0.0);
  auto z = randn({6, 1}, 2).to(torch::kFloat64);
  for (int i = 1; i <= 8; ++i) {
    auto out = teacher_target(model, s, z, i, {}, 1.0, teacher_grid(8));
    EXPECT_LT((out + 0.4).abs().max().item<double>(), 1e-9) << i;
  }
}

TEST(TeacherTarget, GuidanceUsesUnconditionalBranch) {
  NoiseSchedule s;
  int uncond = 0;
  diffusion::VPredictor m = [&](const torch::Tensor& z, const torch::Tensor&,
                                const torch::Tensor& c) {
    if (!c.defined()) ++uncond;
    return torch::zeros_like(z);
  };
  auto z = randn({2, 1}, 3);
  teacher_target(m, s, z, 3, z, 4.0, teacher_grid(4));
  EXPECT_EQ(uncond, 3);
  uncond = 0;
  teacher_target(m, s, z, 3, z, 1.0, teacher_grid(4));
  EXPECT_EQ(uncond, 0);
}

TEST(Dmd, GaussianPairMatchesClosedForm) {
  // Real data N(0, 1), generator z_hat = delta + xi with its exact score
  // N(delta, 1). At any t', -(s_real - s_fake) = alpha(t') delta, so the
  // parameter gradient of the surrogate is delta E[alpha] = 2 delta / pi.
  NoiseSchedule s;
  for (double delta : {0.8, -0.3}) {
    auto gen = torch::make_generator<at::CPUGeneratorImpl>(11);
    auto d = torch::tensor(delta, torch::dtype(torch::kFloat64).requires_grad(true));
    auto xi = torch::randn({10000, 1}, gen, torch::kFloat64);
    auto z_hat = xi + d;
    auto g = dmd_gradient(testing::gaussian_predictor(0.0, 1.0),
                          testing::gaussian_predictor(delta, 1.0), s, z_hat, {}, 1.0, gen,
                          /*normalize=*/false);
    dmd_surrogate_loss(z_hat, g.grad).backward();
    const double est = d.grad().item<double>();
    const double want = 2.0 * delta / std::numbers::pi;
    EXPECT_EQ(std::signbit(est), std::signbit(want));
    EXPECT_LT(std::abs(est - want) / std::abs(want), 0.05) << delta;
    EXPECT_GE(g.t_prime.min().item<double>(), 4.0 / std::numbers::pi * 1e-8);
  }
}

TEST(Dmd, NormalizationGivesUnitMeanMagnitude) {
  NoiseSchedule s;
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(12);
  auto z_hat = torch::randn({8, 2, 3, 3}, gen, torch::kFloat64);
  auto g = dmd_gradient(testing::gaussian_predictor(0.0, 1.0),
                        testing::gaussian_predictor(0.5, 1.0), s, z_hat, {}, 1.0, gen, true);
  // |diff| = alpha(t') * 0.5 everywhere, so each sample's mean magnitude is
  // m / (m + 1e-8).
  auto per_sample = g.grad.abs().mean({1, 2, 3});
  auto m = torch::cos(g.t_prime * (std::numbers::pi / 2)) * 0.5;
  EXPECT_LT((per_sample - m / (m + 1e-8)).abs().max().item<double>(), 1e-9);
  // Generated samples that already match the real distribution get no push.
  auto g0 = dmd_gradient(testing::gaussian_predictor(0.0, 1.0),
                         testing::gaussian_predictor(0.0, 1.0), s, z_hat, {}, 1.0, gen, false);
  EXPECT_LT(g0.grad.abs().max().item<double>(), 1e-9);
}

TEST(Dmd, FixedTimestepAndSurrogateValue) {
  NoiseSchedule s;
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(13);
  auto z_hat = torch::randn({4, 1}, gen, torch::kFloat64);
  auto tp = torch::full({4}, 0.5, torch::kFloat64);
  auto g = dmd_gradient(testing::gaussian_predictor(0.0, 1.0),
                        testing::gaussian_predictor(1.0, 1.0), s, z_hat, {}, 1.0, gen, false, tp);
  EXPECT_TRUE(torch::equal(g.t_prime, tp));
  EXPECT_LT((g.grad - std::cos(std::numbers::pi / 4)).abs().max().item<double>(), 1e-9);
  const double loss = dmd_surrogate_loss(z_hat, g.grad).item<double>();
  EXPECT_NEAR(loss, 0.5 * g.grad.pow(2).mean().item<double>(), 1e-12);
}

TEST(Adversarial, TDoublePrimeDrawsAtoms) {
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(1);
  const std::vector<double> atoms = {0.01, 0.25, 0.5, 0.75};
  auto t = sample_t_double_prime(atoms, 8000, gen);
  for (double a : atoms) {
    const double frac = (t == a).to(torch::kFloat64).mean().item<double>();
    EXPECT_NEAR(frac, 0.25, 0.02) << a;
  }
}

TEST(Adversarial, GradientRoutingAndLsgan) {
  NoiseSchedule s;
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(2);
  auto teacher = std::make_shared<denoiser::UNetDenoiser>(tiny_config());
  denoiser::freeze(*teacher);
  Discriminator disc(DiscriminatorConfig{2, 8});
  auto z_h = randn({2, 2, 4, 4}, 1), z_l = randn({2, 2, 4, 4}, 2);
  auto z_hat = randn({2, 2, 4, 4}, 3).requires_grad_(true);
  auto losses = adversarial_losses([&](const torch::Tensor& x) { return disc->forward(x); },
                                   denoiser::as_predictor(teacher), s, z_h, z_hat, z_l,
                                   {0.01, 0.25, 0.5, 0.75}, gen);
  EXPECT_EQ(losses.t_double_prime.size(0), 2);
  EXPECT_GE(losses.adv.item<double>(), 0.0);
  EXPECT_GE(losses.disc.item<double>(), 0.0);
  losses.disc.backward({}, /*retain_graph=*/true);
  EXPECT_FALSE(z_hat.grad().defined());
  EXPECT_TRUE(disc->parameters().front().grad().defined());
  losses.adv.backward();
  ASSERT_TRUE(z_hat.grad().defined());
  EXPECT_GT(z_hat.grad().abs().sum().item<double>(), 0.0);
  for (const auto& p : teacher->parameters()) EXPECT_FALSE(p.grad().defined());
}

TEST(Step, PureDistillationTotalEqualsDistillLoss) {
  NoiseSchedule s;
  torch::manual_seed(4);
  auto teacher = std::make_shared<denoiser::UNetDenoiser>(tiny_config());
  auto cfg = small_config();
  cfg.lambda_adv_final = 0.0;
  cfg.lambda_dmd_final = 0.0;
  auto state = make_distill_state(teacher, {4, 1.0}, cfg);
  for (int k = 0; k < 4; ++k) {
    const auto r = distill_step(state, randn({3, 2, 4, 4}, 10 + k), randn({3, 2, 4, 4}, 20 + k),
                                cfg, s);
    EXPECT_EQ(r.total, r.l_distil) << k;
    EXPECT_EQ(r.step, k);
  }
}

TEST(Step, OnlyAdaptersAndDiscriminatorMove) {
  NoiseSchedule s;
  torch::manual_seed(5);
  auto teacher = std::make_shared<denoiser::UNetDenoiser>(tiny_config());
  const auto teacher_before = io::state_of(*teacher);
  auto cfg = small_config();
  auto state = make_distill_state(teacher, {4, 1.0}, cfg);
  const auto student_before = io::state_of(*state.student);
  const auto disc_before = io::state_of(*state.discriminator);
  for (int k = 0; k < 3; ++k) {
    const auto r = distill_step(state, randn({3, 2, 4, 4}, k), randn({3, 2, 4, 4}, 9 + k), cfg, s);
    EXPECT_EQ(r.weights.dmd, lambda_schedule(k, cfg).dmd);
    if (k >= 1) EXPECT_NE(r.total, r.l_distil);
  }
  for (const auto& [name, t] : io::state_of(*teacher)) {
    EXPECT_TRUE(torch::equal(t, teacher_before.at(name))) << name;
  }
  bool adapter_moved = false;
  for (const auto& [name, t] : io::state_of(*state.student)) {
    const bool same = torch::equal(t, student_before.at(name));
    if (name.find("lora_") != std::string::npos) {
      adapter_moved |= !same;
    } else {
      EXPECT_TRUE(same) << name;
    }
  }
  EXPECT_TRUE(adapter_moved);
  bool disc_moved = false;
  for (const auto& [name, t] : io::state_of(*state.discriminator)) {
    disc_moved |= !torch::equal(t, disc_before.at(name));
  }
  EXPECT_TRUE(disc_moved);
}

TEST(Step, NonFiniteLossAbortsWithSnapshot) {
  NoiseSchedule s;
  auto teacher = std::make_shared<denoiser::UNetDenoiser>(tiny_config());
  auto cfg = small_config();
  auto state = make_distill_state(teacher, {4, 1.0}, cfg);
  auto z_h = randn({3, 2, 4, 4}, 1);
  z_h[0][0][0][0] = std::nanf("");
  try {
    distill_step(state, z_h, randn({3, 2, 4, 4}, 2), cfg, s);
    FAIL() << "expected InternalError";
  } catch (const InternalError& e) {
    EXPECT_NE(std::string(e.what()).find("t_i=["), std::string::npos);
  }
  EXPECT_THROW(distill_step(state, randn({3, 2, 4, 4}, 1), randn({2, 2, 4, 4}, 2), cfg, s),
               InvalidArgument);
}

TEST(Run, LogsCheckpointsAndIsReproducible) {
  NoiseSchedule s;
  const auto dir = testing::scratch_dir("distill");
  denoiser::LatentPairs data{randn({6, 2, 4, 4}, 1), randn({6, 2, 4, 4}, 2)};
  auto cfg = small_config();
  DistillRunConfig run{4, dir / "log.csv", dir, 2, "toy"};
  std::vector<double> totals[2];
  for (int rep = 0; rep < 2; ++rep) {
    torch::manual_seed(6);
    auto teacher = std::make_shared<denoiser::UNetDenoiser>(tiny_config());
    auto state = make_distill_state(teacher, {4, 1.0}, cfg);
    for (const auto& r : run_distillation(state, data, cfg, s, run)) totals[rep].push_back(r.total);
  }
  EXPECT_EQ(totals[0], totals[1]);
  EXPECT_TRUE(std::filesystem::exists(dir / "toy-step2.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "toy-step4.ckpt"));
  std::ifstream in(dir / "log.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "step,l_distil,l_dmd,l_adv,l_disc,lambda_adv,lambda_dmd,wall_clock_s");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 4);
}

TEST(OneStep, ShapeAndDeterminism) {
  NoiseSchedule s;
  denoiser::UNetDenoiser student(tiny_config());
  student.eval();
  auto z_l = randn({2, 2, 4, 4}, 1);
  auto g1 = torch::make_generator<at::CPUGeneratorImpl>(3);
  auto g2 = torch::make_generator<at::CPUGeneratorImpl>(3);
  auto a = one_step_sample(student, s, z_l, g1);
  auto b = one_step_sample(student, s, z_l, g2);
  EXPECT_EQ(a.sizes(), z_l.sizes());
  EXPECT_TRUE(torch::equal(a, b));
}

}  // namespace
}  // namespace flashsr::distill
