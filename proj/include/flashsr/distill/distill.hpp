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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "flashsr/denoiser/denoiser.hpp"
#include "flashsr/denoiser/teacher.hpp"
#include "flashsr/diffusion/diffusion.hpp"
#include "json.hpp"

namespace flashsr::distill {

struct DistillConfig {
  double omega = 4.0;  // fixed guidance scale for every teacher call
  double lambda_adv_final = 0.3;
  double lambda_dmd_final = 0.7;
  int ramp_period = 5000;  // weights rise in equal increments every period...
  int ramp_end = 20000;    // ...until they reach their finals here
  std::vector<double> t_double_prime_set = {0.01, 0.25, 0.5, 0.75};
  int teacher_grid_points = 8;  // t_k = k / 8, k = 1..8
  diffusion::SolverKind solver = diffusion::SolverKind::kDpmSolver2M;  // teacher target solver
  diffusion::TimestepDistribution timesteps = diffusion::TimestepDistribution::few_step_default();
  bool normalize_dmd = true;
  double lr = 1e-4;
  double disc_lr = 1e-4;
  double weight_decay = 1e-2;
  int batch_size = 4;
  int total_steps = 30000;
  uint64_t seed = 0;

  void validate() const;
  static DistillConfig paper();  // lr 1e-5, batch 16
  static DistillConfig desk();   // lr 1e-4, batch 4
};

struct LossWeights {
  double adv = 0.0;
  double dmd = 0.0;
};

// Staircase: final * floor(min(step, end) / period) / (end / period).
LossWeights lambda_schedule(int64_t step, const DistillConfig& cfg);

// Ascending teacher grid {0, 1/K, ..., 1}; index i is timestep i / K.
std::vector<double> teacher_grid(int points);
// Nearest grid index in [1, K] for a continuous t.
int snap_to_grid(double t, int points);

// z_{t_0} from z_{t_i} by iterating guided teacher predictions and solver
// steps for j = i-1 .. 0 over `grid` (ascending, grid[0] = 0). No gradient.
torch::Tensor teacher_target(const diffusion::VPredictor& teacher,
                             const diffusion::NoiseSchedule& schedule, const torch::Tensor& z_ti,
                             int i, const torch::Tensor& z_l, double omega,
                             const std::vector<double>& grid,
                             diffusion::SolverKind solver = diffusion::SolverKind::kDdim);

// Mean squared error.
torch::Tensor loss_distillation(const torch::Tensor& z_hat_t0, const torch::Tensor& z_t0);

struct DmdGradient {
  torch::Tensor grad;     // -(s_teacher - s_student), optionally normalized; detached
  torch::Tensor t_prime;  // [B]
};

// Re-noises z_hat at t' ~ U(0, 1) (redrawn while sigma(t') is too small),
// scores the result with the guided teacher and the conditional student, and
// returns the gradient to inject into z_hat. With `normalize`, each sample is
// divided by its mean |s_teacher - s_student| + 1e-8.
DmdGradient dmd_gradient(const diffusion::VPredictor& teacher,
                         const diffusion::VPredictor& student,
                         const diffusion::NoiseSchedule& schedule, const torch::Tensor& z_hat,
                         const torch::Tensor& z_l, double omega, torch::Generator& gen,
                         bool normalize = true, const torch::Tensor& fixed_t_prime = {});

// 0.5 * mean((z_hat - sg(z_hat - grad))^2): its gradient w.r.t. z_hat is
// grad / numel, and its value is 0.5 * mean(grad^2) >= 0.
torch::Tensor dmd_surrogate_loss(const torch::Tensor& z_hat, const torch::Tensor& grad);

// Per-sample draw from the t'' atoms.
torch::Tensor sample_t_double_prime(const std::vector<double>& atoms, int64_t batch,
                                    torch::Generator& gen);

using ScoreMap = std::function<torch::Tensor(const torch::Tensor&)>;

struct AdversarialLosses {
  torch::Tensor adv;   // generator side; gradient reaches z_hat through the teacher
  torch::Tensor disc;  // discriminator side; inputs detached
  torch::Tensor t_double_prime;
};

// Least-squares GAN on the frozen teacher's conditional v-output of the
// perturbed real (z_h) and fake (z_hat) latents:
//   L_adv  = E (d(f(z_hat_t'')) - 1)^2
//   L_disc = 0.5 E [ d(f(z_hat_t''))^2 + (d(f(z_t'')) - 1)^2 ]
AdversarialLosses adversarial_losses(const ScoreMap& discriminator,
                                     const diffusion::VPredictor& teacher,
                                     const diffusion::NoiseSchedule& schedule,
                                     const torch::Tensor& z_h, const torch::Tensor& z_hat,
                                     const torch::Tensor& z_l,
                                     const std::vector<double>& t_double_prime_set,
                                     torch::Generator& gen);

struct DiscriminatorConfig {
  int in_channels = 16;
  int width = 64;

  nlohmann::json to_json() const { return {{"in_channels", in_channels}, {"width", width}}; }
};

// Three conv -> GroupNorm -> SiLU blocks and a 1x1 head: one score per patch.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Discriminator);

struct LossReport {
  int64_t step = 0;
  double l_distil = 0.0;
  double l_dmd = 0.0;
  double l_adv = 0.0;
  double l_disc = 0.0;
  double total = 0.0;
  LossWeights weights;
};

struct DistillState {
  denoiser::VModelPtr teacher;
  denoiser::VModelPtr student;
  Discriminator discriminator{nullptr};
  std::unique_ptr<torch::optim::AdamW> student_opt;
  std::unique_ptr<torch::optim::AdamW> disc_opt;
  torch::Generator gen;
  std::mt19937_64 rng;
  int64_t step = 0;
};

// Freezes the teacher, attaches a LoRA student built from it, a fresh
// discriminator and both optimizers.
DistillState make_distill_state(const denoiser::VModelPtr& teacher,
                                const denoiser::LoraConfig& lora, const DistillConfig& cfg);

// One iteration of the student training loop:
// t_i ~ pi snapped to the teacher grid, z_ti = a z_h + s eps,
// z_hat = a z_ti - s f_student(z_ti, t_i, z_l), teacher target z_t0,
// L = L_distil + l_dmd L_dmd + l_adv L_adv (zero-weight terms left out),
// student step, then discriminator step on L_disc.
// Throws InternalError with a diagnostic snapshot on a non-finite loss.
LossReport distill_step(DistillState& state, const torch::Tensor& z_h, const torch::Tensor& z_l,
                        const DistillConfig& cfg, const diffusion::NoiseSchedule& schedule);

// One-NFE student sample from pure noise at t = 1.
torch::Tensor one_step_sample(denoiser::VModel& student, const diffusion::NoiseSchedule& schedule,
                              const torch::Tensor& z_l, torch::Generator& gen);

// CSV training log: step,l_distil,l_dmd,l_adv,l_disc,lambda_adv,lambda_dmd,wall_clock_s
class TrainingLog {
 public:
  explicit TrainingLog(const std::filesystem::path& path);
  void append(const LossReport& r, double wall_clock_s);

 private:
  std::filesystem::path path_;
};

struct DistillRunConfig {
  int steps = 1;
  std::filesystem::path log_path;        // empty: no log
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  int checkpoint_every = 0;
  std::string checkpoint_tag = "distill";
};

// Runs `steps` iterations over random minibatches of `data`.
std::vector<LossReport> run_distillation(DistillState& state, const denoiser::LatentPairs& data,
                                         const DistillConfig& cfg,
                                         const diffusion::NoiseSchedule& schedule,
                                         const DistillRunConfig& run);

}  // namespace flashsr::distill
