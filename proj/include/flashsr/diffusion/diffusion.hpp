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

#include <functional>
#include <random>
#include <vector>

#include <torch/torch.h>

namespace flashsr::diffusion {

// Variance-preserving cosine schedule: alpha(t) = cos(pi t / 2),
// sigma(t) = sin(pi t / 2), t in [0, 1].
class NoiseSchedule {
 public:
  explicit NoiseSchedule(int grid_size = 1000);

  double alpha(double t) const;
  double sigma(double t) const;
  // log(alpha / sigma); +inf at t = 0.
  double log_snr_half(double t) const;

  // Per-sample coefficients for t of shape [B], broadcastable against a
  // latent batch of rank `rank` (so shape [B, 1, ..., 1]).
  torch::Tensor alpha(const torch::Tensor& t, int64_t rank) const;
  torch::Tensor sigma(const torch::Tensor& t, int64_t rank) const;

  int grid_size() const { return grid_size_; }
  double grid_point(int k) const { return static_cast<double>(k) / grid_size_; }

 private:
  int grid_size_;
};

// Timesteps are either one scalar for the whole batch or a [B] tensor.
// Every operation below accepts both through this small wrapper.
class Timestep {
 public:
  Timestep(double t) : scalar_(t) {}  // NOLINT(google-explicit-constructor)
  Timestep(torch::Tensor t) : tensor_(std::move(t)) {}  // NOLINT(google-explicit-constructor)

  torch::Tensor alpha(const NoiseSchedule& s, const torch::Tensor& like) const;
  torch::Tensor sigma(const NoiseSchedule& s, const torch::Tensor& like) const;
  // [B] tensor form, for feeding the networks.
  torch::Tensor batch(int64_t batch_size, const torch::TensorOptions& opts) const;
  bool is_scalar() const { return !tensor_.defined(); }
  double scalar() const { return scalar_; }

 private:
  double scalar_ = 0.0;
  torch::Tensor tensor_;
};

// alpha(t) z0 + sigma(t) eps.
torch::Tensor diffuse_forward(const NoiseSchedule& s, const torch::Tensor& z0, const Timestep& t,
                              const torch::Tensor& eps);
// alpha(t) eps - sigma(t) z0.
torch::Tensor v_target(const NoiseSchedule& s, const torch::Tensor& z0, const torch::Tensor& eps,
                       const Timestep& t);
// alpha(t) z_t - sigma(t) v.
torch::Tensor x0_from_v(const NoiseSchedule& s, const torch::Tensor& z_t, const torch::Tensor& v,
                        const Timestep& t);
// sigma(t) z_t + alpha(t) v.
torch::Tensor eps_from_v(const NoiseSchedule& s, const torch::Tensor& z_t, const torch::Tensor& v,
                         const Timestep& t);
// -eps / sigma(t). Throws UndefinedScore where sigma(t) < kMinScoreSigma.
torch::Tensor score_from_eps(const NoiseSchedule& s, const torch::Tensor& eps, const Timestep& t);

inline constexpr double kMinScoreSigma = 1e-8;

// omega v_cond + (1 - omega) v_uncond.
torch::Tensor cfg_combine(const torch::Tensor& v_cond, const torch::Tensor& v_uncond,
                          double omega);

// A v-predicting model. An undefined `cond` selects the unconditional pathway.
using VPredictor =
    std::function<torch::Tensor(const torch::Tensor& z_t, const torch::Tensor& t,
                                const torch::Tensor& cond)>;

// Guided v-prediction. omega == 1 skips the unconditional evaluation.
torch::Tensor guided_v(const VPredictor& model, const torch::Tensor& z_t, double t,
                       const torch::Tensor& cond, double omega);

// DDIM step from t_from down to t_to (t_to < t_from, else InvalidArgument).
torch::Tensor ode_step(const NoiseSchedule& s, const torch::Tensor& z_t,
                       const torch::Tensor& v_hat, double t_from, double t_to);

enum class SolverKind { kDdim, kDpmSolver2M };

// Stateful solver Phi. DPM-Solver++(2M) keeps the previous data prediction;
// its first step and any step landing on t = 0 reduce to DDIM.
class OdeSolver {
 public:
  OdeSolver(const NoiseSchedule& s, SolverKind kind) : schedule_(s), kind_(kind) {}

  torch::Tensor step(const torch::Tensor& z_t, const torch::Tensor& v_hat, double t_from,
                     double t_to);
  void reset() { prev_x0_ = torch::Tensor(); }

 private:
  const NoiseSchedule& schedule_;
  SolverKind kind_;
  torch::Tensor prev_x0_;
  double prev_h_ = 0.0;
};

// Uniform grid from t_start down to 0 with `steps` intervals.
std::vector<double> uniform_grid(double t_start, int steps);

// Runs the guided reverse ODE over `grid` (descending, ending at 0).
// Every step costs one NFE at omega == 1 and two otherwise.
torch::Tensor sample(const NoiseSchedule& s, const VPredictor& model, torch::Tensor z,
                     const std::vector<double>& grid, const torch::Tensor& cond, double omega,
                     SolverKind solver = SolverKind::kDdim);

// Mixture of Gaussians over t with draws clipped to [0, 1].
struct TimestepDistribution {
  struct Mode {
    double center;
    double stddev;
  };
  std::vector<Mode> modes;
  std::vector<double> weights;

  void validate() const;
  double sample(std::mt19937_64& rng) const;

  // Centers at the four few-step timesteps {0.25, 0.5, 0.75, 1}, std 0.1.
  static TimestepDistribution few_step_default();
};

}  // namespace flashsr::diffusion
