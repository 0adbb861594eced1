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

#include "flashsr/diffusion/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "flashsr/error.hpp"

namespace flashsr::diffusion {

using std::numbers::pi;

NoiseSchedule::NoiseSchedule(int grid_size) : grid_size_(grid_size) {
  if (grid_size < 1) throw InvalidArgument("schedule grid size must be >= 1");
}

double NoiseSchedule::alpha(double t) const { return std::cos(pi * t / 2.0); }
double NoiseSchedule::sigma(double t) const { return std::sin(pi * t / 2.0); }

double NoiseSchedule::log_snr_half(double t) const {
  const double s = sigma(t);
  if (s == 0.0) return std::numeric_limits<double>::infinity();
  return std::log(alpha(t)) - std::log(s);
}

namespace {

std::vector<int64_t> broadcast_shape(int64_t batch, int64_t rank) {
  std::vector<int64_t> shape(static_cast<size_t>(std::max<int64_t>(rank, 1)), 1);
  shape[0] = batch;
  return shape;
}

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw InvalidArgument(std::string(what) + ": shape mismatch");
  }
}

void check_t(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("timestep outside [0, 1]");
}

}  // namespace

torch::Tensor NoiseSchedule::alpha(const torch::Tensor& t, int64_t rank) const {
  return torch::cos(t * (pi / 2.0)).reshape(broadcast_shape(t.size(0), rank));
}

torch::Tensor NoiseSchedule::sigma(const torch::Tensor& t, int64_t rank) const {
  return torch::sin(t * (pi / 2.0)).reshape(broadcast_shape(t.size(0), rank));
}

torch::Tensor Timestep::alpha(const NoiseSchedule& s, const torch::Tensor& like) const {
  if (is_scalar()) {
    check_t(scalar_);
    return torch::scalar_tensor(s.alpha(scalar_), like.options());
  }
  return s.alpha(tensor_.to(like.options()), like.dim());
}

torch::Tensor Timestep::sigma(const NoiseSchedule& s, const torch::Tensor& like) const {
  if (is_scalar()) {
    check_t(scalar_);
    return torch::scalar_tensor(s.sigma(scalar_), like.options());
  }
  return s.sigma(tensor_.to(like.options()), like.dim());
}

torch::Tensor Timestep::batch(int64_t batch_size, const torch::TensorOptions& opts) const {
  if (is_scalar()) return torch::full({batch_size}, scalar_, opts);
  return tensor_.to(opts);
}

torch::Tensor diffuse_forward(const NoiseSchedule& s, const torch::Tensor& z0, const Timestep& t,
                              const torch::Tensor& eps) {
  check_same_shape(z0, eps, "diffuse_forward");
  return t.alpha(s, z0) * z0 + t.sigma(s, z0) * eps;
}

torch::Tensor v_target(const NoiseSchedule& s, const torch::Tensor& z0, const torch::Tensor& eps,
                       const Timestep& t) {
  check_same_shape(z0, eps, "v_target");
  return t.alpha(s, z0) * eps - t.sigma(s, z0) * z0;
}

torch::Tensor x0_from_v(const NoiseSchedule& s, const torch::Tensor& z_t, const torch::Tensor& v,
                        const Timestep& t) {
  check_same_shape(z_t, v, "x0_from_v");
  return t.alpha(s, z_t) * z_t - t.sigma(s, z_t) * v;
}

torch::Tensor eps_from_v(const NoiseSchedule& s, const torch::Tensor& z_t, const torch::Tensor& v,
                         const Timestep& t) {
  check_same_shape(z_t, v, "eps_from_v");
  return t.sigma(s, z_t) * z_t + t.alpha(s, z_t) * v;
}

torch::Tensor score_from_eps(const NoiseSchedule& s, const torch::Tensor& eps, const Timestep& t) {
  auto sigma = t.sigma(s, eps);
  if (sigma.min().item<double>() < kMinScoreSigma) {
    throw UndefinedScore("score requested where sigma(t) = 0");
  }
  return -eps / sigma;
}

torch::Tensor cfg_combine(const torch::Tensor& v_cond, const torch::Tensor& v_uncond,
                          double omega) {
  check_same_shape(v_cond, v_uncond, "cfg_combine");
  if (!(omega >= 0.0)) throw InvalidArgument("guidance scale must be >= 0");
  return omega * v_cond + (1.0 - omega) * v_uncond;
}

torch::Tensor guided_v(const VPredictor& model, const torch::Tensor& z_t, double t,
                       const torch::Tensor& cond, double omega) {
  const auto tb = torch::full({z_t.size(0)}, t, z_t.options());
  auto v_cond = model(z_t, tb, cond);
  if (omega == 1.0) return v_cond;
  auto v_uncond = model(z_t, tb, torch::Tensor());
  return cfg_combine(v_cond, v_uncond, omega);
}

torch::Tensor ode_step(const NoiseSchedule& s, const torch::Tensor& z_t,
                       const torch::Tensor& v_hat, double t_from, double t_to) {
  if (!(t_to < t_from)) throw InvalidArgument("ode_step requires t_to < t_from");
  check_t(t_from);
  check_t(t_to);
  auto x0 = x0_from_v(s, z_t, v_hat, t_from);
  if (t_to == 0.0) return x0;
  auto eps = eps_from_v(s, z_t, v_hat, t_from);
  return s.alpha(t_to) * x0 + s.sigma(t_to) * eps;
}

torch::Tensor OdeSolver::step(const torch::Tensor& z_t, const torch::Tensor& v_hat,
                              double t_from, double t_to) {
  if (kind_ == SolverKind::kDdim) return ode_step(schedule_, z_t, v_hat, t_from, t_to);
  if (!(t_to < t_from)) throw InvalidArgument("ode_step requires t_to < t_from");

  auto x0 = x0_from_v(schedule_, z_t, v_hat, t_from);
  if (t_to == 0.0) {
    prev_x0_ = x0;
    return x0;
  }
  const double lam_from = schedule_.log_snr_half(t_from);
  const double lam_to = schedule_.log_snr_half(t_to);
  const double h = lam_to - lam_from;
  torch::Tensor d = x0;
  if (prev_x0_.defined() && std::isfinite(lam_from) && prev_h_ > 0.0) {
    const double r = prev_h_ / h;
    d = (1.0 + 1.0 / (2.0 * r)) * x0 - (1.0 / (2.0 * r)) * prev_x0_;
  }
  const double s_from = schedule_.sigma(t_from);
  const double s_to = schedule_.sigma(t_to);
  const double a_to = schedule_.alpha(t_to);
  auto out = (s_to / s_from) * z_t - a_to * std::expm1(-h) * d;
  prev_x0_ = x0;
  prev_h_ = h;
  return out;
}

std::vector<double> uniform_grid(double t_start, int steps) {
  if (steps < 1) throw InvalidArgument("grid needs at least one step");
  std::vector<double> grid(static_cast<size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) grid[k] = t_start * (steps - k) / steps;
  grid.back() = 0.0;
  return grid;
}

torch::Tensor sample(const NoiseSchedule& s, const VPredictor& model, torch::Tensor z,
                     const std::vector<double>& grid, const torch::Tensor& cond, double omega,
                     SolverKind solver) {
  OdeSolver phi(s, solver);
  for (size_t j = 0; j + 1 < grid.size(); ++j) {
    auto v = guided_v(model, z, grid[j], cond, omega);
    z = phi.step(z, v, grid[j], grid[j + 1]);
  }
  return z;
}

void TimestepDistribution::validate() const {
  if (modes.empty() || modes.size() != weights.size()) {
    throw InvalidArgument("timestep distribution needs one weight per mode");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("timestep weights must sum to 1");
  for (size_t i = 0; i < modes.size(); ++i) {
    if (weights[i] < 0.0 || modes[i].stddev < 0.0) {
      throw InvalidArgument("timestep weights and stddevs must be non-negative");
    }
  }
}

double TimestepDistribution::sample(std::mt19937_64& rng) const {
  std::discrete_distribution<size_t> pick(weights.begin(), weights.end());
  const Mode& m = modes[pick(rng)];
  double t = m.center;
  if (m.stddev > 0.0) t = std::normal_distribution<double>(m.center, m.stddev)(rng);
  return std::clamp(t, 0.0, 1.0);
}

TimestepDistribution TimestepDistribution::few_step_default() {
  return {{{0.25, 0.1}, {0.5, 0.1}, {0.75, 0.1}, {1.0, 0.1}}, {0.25, 0.25, 0.25, 0.25}};
}

}  // namespace flashsr::diffusion
