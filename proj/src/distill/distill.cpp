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

#include "flashsr/distill/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "flashsr/error.hpp"
#include "flashsr/nn/layers.hpp"

namespace flashsr::distill {

namespace tnn = torch::nn;
using diffusion::NoiseSchedule;
using diffusion::VPredictor;

void DistillConfig::validate() const {
  if (omega < 0.0) throw InvalidArgument("guidance scale must be >= 0");
  if (lambda_adv_final < 0.0 || lambda_dmd_final < 0.0) {
    throw InvalidArgument("loss weights must be >= 0");
  }
  if (ramp_period < 1 || ramp_end < ramp_period || ramp_end % ramp_period != 0) {
    throw InvalidArgument("ramp end must be a positive multiple of the ramp period");
  }
  if (t_double_prime_set.empty()) throw InvalidArgument("t'' set must not be empty");
  if (teacher_grid_points < 1) throw InvalidArgument("teacher grid needs >= 1 point");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  timesteps.validate();
}

DistillConfig DistillConfig::paper() {
  DistillConfig c;
  c.lr = 1e-5;
  c.disc_lr = 1e-5;
  c.batch_size = 16;
  c.total_steps = 30000;
  return c;
}

DistillConfig DistillConfig::desk() { return DistillConfig{}; }

LossWeights lambda_schedule(int64_t step, const DistillConfig& cfg) {
  const int64_t increments = cfg.ramp_end / cfg.ramp_period;
  const int64_t reached = std::min<int64_t>(std::max<int64_t>(step, 0), cfg.ramp_end) / cfg.ramp_period;
  if (reached >= increments) return {cfg.lambda_adv_final, cfg.lambda_dmd_final};
  const double frac = static_cast<double>(reached) / static_cast<double>(increments);
  return {cfg.lambda_adv_final * frac, cfg.lambda_dmd_final * frac};
}

std::vector<double> teacher_grid(int points) {
  std::vector<double> grid(static_cast<size_t>(points) + 1);
  for (int k = 0; k <= points; ++k) grid[k] = static_cast<double>(k) / points;
  return grid;
}

int snap_to_grid(double t, int points) {
  return std::clamp(static_cast<int>(std::lround(t * points)), 1, points);
}

torch::Tensor teacher_target(const VPredictor& teacher, const NoiseSchedule& schedule,
                             const torch::Tensor& z_ti, int i, const torch::Tensor& z_l,
                             double omega, const std::vector<double>& grid,
                             diffusion::SolverKind solver) {
  if (i < 1 || i >= static_cast<int>(grid.size())) {
    throw InvalidArgument("teacher_target: grid index out of range");
  }
  torch::NoGradGuard no_grad;
  diffusion::OdeSolver phi(schedule, solver);
  auto z = z_ti;
  for (int j = i - 1; j >= 0; --j) {
    auto v_hat = diffusion::guided_v(teacher, z, grid[j + 1], z_l, omega);
    z = phi.step(z, v_hat, grid[j + 1], grid[j]);
  }
  return z;
}

torch::Tensor loss_distillation(const torch::Tensor& z_hat_t0, const torch::Tensor& z_t0) {
  if (!z_hat_t0.sizes().equals(z_t0.sizes())) {
    throw InvalidArgument("loss_distillation: shape mismatch");
  }
  return torch::mse_loss(z_hat_t0, z_t0);
}

DmdGradient dmd_gradient(const VPredictor& teacher, const VPredictor& student,
                         const NoiseSchedule& schedule, const torch::Tensor& z_hat,
                         const torch::Tensor& z_l, double omega, torch::Generator& gen,
                         bool normalize, const torch::Tensor& fixed_t_prime) {
  torch::NoGradGuard no_grad;
  const auto x = z_hat.detach();
  const auto b = x.size(0);
  const auto opts = x.options();

  torch::Tensor t_prime;
  if (fixed_t_prime.defined()) {
    t_prime = fixed_t_prime.to(opts);
  } else {
    t_prime = torch::rand({b}, gen, opts);
    // sigma(t) ~ pi t / 2 near 0; keep well clear of the undefined-score region.
    const double t_min = 4.0 / M_PI * diffusion::kMinScoreSigma;
    auto bad = t_prime < t_min;
    while (bad.any().item<bool>()) {
      t_prime = torch::where(bad, torch::rand({b}, gen, opts), t_prime);
      bad = t_prime < t_min;
    }
  }

  auto eps = torch::randn(x.sizes(), gen, opts);
  auto z_t = diffusion::diffuse_forward(schedule, x, t_prime, eps);

  auto v_real = torch::zeros_like(z_t);
  {
    auto v_cond = teacher(z_t, t_prime, z_l);
    v_real = omega == 1.0 ? v_cond
                          : diffusion::cfg_combine(v_cond, teacher(z_t, t_prime, torch::Tensor()),
                                                   omega);
  }
  auto v_fake = student(z_t, t_prime, z_l);

  auto s_real = diffusion::score_from_eps(
      schedule, diffusion::eps_from_v(schedule, z_t, v_real, t_prime), t_prime);
  auto s_fake = diffusion::score_from_eps(
      schedule, diffusion::eps_from_v(schedule, z_t, v_fake, t_prime), t_prime);

  auto diff = s_real - s_fake;
  auto grad = -diff;
  if (normalize) {
    std::vector<int64_t> dims;
    for (int64_t d = 1; d < diff.dim(); ++d) dims.push_back(d);
    auto scale = dims.empty() ? diff.abs() : diff.abs().mean(dims, /*keepdim=*/true);
    grad = grad / (scale + 1e-8);
  }
  return {grad, t_prime};
}

torch::Tensor dmd_surrogate_loss(const torch::Tensor& z_hat, const torch::Tensor& grad) {
  return 0.5 * torch::mse_loss(z_hat, (z_hat - grad).detach());
}

torch::Tensor sample_t_double_prime(const std::vector<double>& atoms, int64_t batch,
                                    torch::Generator& gen) {
  auto idx = torch::randint(static_cast<int64_t>(atoms.size()), {batch}, gen, torch::kLong);
  auto table = torch::tensor(atoms, torch::kFloat64);
  return table.index_select(0, idx);
}

AdversarialLosses adversarial_losses(const ScoreMap& discriminator, const VPredictor& teacher,
                                     const NoiseSchedule& schedule, const torch::Tensor& z_h,
                                     const torch::Tensor& z_hat, const torch::Tensor& z_l,
                                     const std::vector<double>& t_double_prime_set,
                                     torch::Generator& gen) {
  const auto opts = z_hat.options();
  auto t2 = sample_t_double_prime(t_double_prime_set, z_hat.size(0), gen).to(opts);
  auto eps_real = torch::randn(z_h.sizes(), gen, opts);
  auto eps_fake = torch::randn(z_hat.sizes(), gen, opts);

  torch::Tensor feat_real;
  {
    torch::NoGradGuard no_grad;
    feat_real = teacher(diffusion::diffuse_forward(schedule, z_h, t2, eps_real), t2, z_l);
  }
  auto feat_fake = teacher(diffusion::diffuse_forward(schedule, z_hat, t2, eps_fake), t2, z_l);

  AdversarialLosses out;
  out.t_double_prime = t2;
  out.adv = (discriminator(feat_fake) - 1.0).pow(2).mean();
  out.disc = 0.5 * (discriminator(feat_fake.detach()).pow(2).mean() +
                    (discriminator(feat_real) - 1.0).pow(2).mean());
  return out;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& cfg) {
  const int w = cfg.width;
  body_ = tnn::Sequential(
      tnn::Conv2d(tnn::Conv2dOptions(cfg.in_channels, w, 3).padding(1)), nn::group_norm(w),
      tnn::SiLU(), tnn::Conv2d(tnn::Conv2dOptions(w, w, 3).padding(1)), nn::group_norm(w),
      tnn::SiLU(), tnn::Conv2d(tnn::Conv2dOptions(w, w, 3).padding(1)), nn::group_norm(w),
      tnn::SiLU(), tnn::Conv2d(tnn::Conv2dOptions(w, 1, 1)));
  register_module("body", body_);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) { return body_->forward(x); }

DistillState make_distill_state(const denoiser::VModelPtr& teacher,
                                const denoiser::LoraConfig& lora, const DistillConfig& cfg) {
  cfg.validate();
  torch::manual_seed(cfg.seed);
  DistillState state;
  state.teacher = teacher;
  denoiser::freeze(*teacher);
  teacher->eval();
  state.student = denoiser::apply_lora(*teacher, lora);

  const int channels = static_cast<int>(teacher->config_json().at("latent_channels"));
  state.discriminator = Discriminator(DiscriminatorConfig{channels, 64});

  std::vector<torch::Tensor> trainable;
  for (auto& p : state.student->parameters()) {
    if (p.requires_grad()) trainable.push_back(p);
  }
  state.student_opt = std::make_unique<torch::optim::AdamW>(
      trainable, torch::optim::AdamWOptions(cfg.lr).weight_decay(cfg.weight_decay));
  state.disc_opt = std::make_unique<torch::optim::AdamW>(
      state.discriminator->parameters(),
      torch::optim::AdamWOptions(cfg.disc_lr).weight_decay(cfg.weight_decay));
  state.gen = torch::make_generator<at::CPUGeneratorImpl>(cfg.seed);
  state.rng.seed(cfg.seed);
  return state;
}

namespace {

[[noreturn]] void abort_non_finite(const LossReport& r, const torch::Tensor& t_i) {
  std::ostringstream os;
  os << std::setprecision(9) << "non-finite distillation loss at step " << r.step
     << ": l_distil=" << r.l_distil << " l_dmd=" << r.l_dmd << " l_adv=" << r.l_adv
     << " l_disc=" << r.l_disc << " lambda_adv=" << r.weights.adv
     << " lambda_dmd=" << r.weights.dmd << " t_i=[";
  for (int64_t k = 0; k < t_i.numel(); ++k) os << (k ? "," : "") << t_i[k].item<double>();
  os << "]";
  throw InternalError(os.str());
}

}  // namespace

LossReport distill_step(DistillState& state, const torch::Tensor& z_h, const torch::Tensor& z_l,
                        const DistillConfig& cfg, const NoiseSchedule& schedule) {
  if (!z_h.sizes().equals(z_l.sizes())) throw InvalidArgument("distill_step: batch shape mismatch");
  const auto b = z_h.size(0);
  const auto opts = z_h.options();
  const auto grid = teacher_grid(cfg.teacher_grid_points);
  const auto teacher = denoiser::as_predictor(state.teacher);
  const auto student = denoiser::as_predictor(state.student);
  state.student->train();

  // t_i ~ pi(t), snapped onto the teacher grid.
  std::vector<int> index(static_cast<size_t>(b));
  std::vector<double> t_values(static_cast<size_t>(b));
  for (int64_t k = 0; k < b; ++k) {
    index[k] = snap_to_grid(cfg.timesteps.sample(state.rng), cfg.teacher_grid_points);
    t_values[k] = grid[index[k]];
  }
  auto t_i = torch::tensor(t_values, torch::kFloat64).to(opts);
  auto eps = torch::randn(z_h.sizes(), state.gen, opts);
  auto z_ti = diffusion::diffuse_forward(schedule, z_h, t_i, eps);

  auto v_student = state.student->forward(z_ti, t_i, z_l);
  auto z_hat = diffusion::x0_from_v(schedule, z_ti, v_student, t_i);

  // Teacher targets, batched per grid index.
  auto z_t0 = torch::empty_like(z_h);
  std::map<int, std::vector<int64_t>> groups;
  for (int64_t k = 0; k < b; ++k) groups[index[k]].push_back(k);
  for (const auto& [i, rows] : groups) {
    auto sel = torch::tensor(rows, torch::kLong);
    auto target = teacher_target(teacher, schedule, z_ti.index_select(0, sel), i,
                                 z_l.index_select(0, sel), cfg.omega, grid, cfg.solver);
    z_t0.index_copy_(0, sel, target);
  }

  LossReport report;
  report.step = state.step;
  report.weights = lambda_schedule(state.step, cfg);

  auto l_distil = loss_distillation(z_hat, z_t0);
  auto dmd = dmd_gradient(teacher, student, schedule, z_hat, z_l, cfg.omega, state.gen,
                          cfg.normalize_dmd);
  auto l_dmd = dmd_surrogate_loss(z_hat, dmd.grad);
  auto d = state.discriminator;
  auto adv = adversarial_losses([d](const torch::Tensor& x) mutable { return d->forward(x); }, teacher,
                                schedule, z_h, z_hat, z_l, cfg.t_double_prime_set, state.gen);

  auto total = l_distil;
  if (report.weights.dmd > 0.0) total = total + report.weights.dmd * l_dmd;
  if (report.weights.adv > 0.0) total = total + report.weights.adv * adv.adv;

  report.l_distil = l_distil.item<double>();
  report.l_dmd = l_dmd.item<double>();
  report.l_adv = adv.adv.item<double>();
  report.l_disc = adv.disc.item<double>();
  report.total = total.item<double>();
  for (double v : {report.l_distil, report.l_dmd, report.l_adv, report.l_disc, report.total}) {
    if (!std::isfinite(v)) abort_non_finite(report, t_i);
  }

  state.student_opt->zero_grad();
  total.backward();
  state.student_opt->step();

  state.disc_opt->zero_grad();
  adv.disc.backward();
  state.disc_opt->step();

  ++state.step;
  state.student->eval();
  return report;
}

torch::Tensor one_step_sample(denoiser::VModel& student, const NoiseSchedule& schedule,
                              const torch::Tensor& z_l, torch::Generator& gen) {
  torch::NoGradGuard no_grad;
  auto z = torch::randn(z_l.sizes(), gen, z_l.options());
  auto t = torch::ones({z_l.size(0)}, z_l.options());
  return diffusion::x0_from_v(schedule, z, student.forward(z, t, z_l), 1.0);
}

TrainingLog::TrainingLog(const std::filesystem::path& path) : path_(path) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write training log " + path_.string());
  out << "step,l_distil,l_dmd,l_adv,l_disc,lambda_adv,lambda_dmd,wall_clock_s\n";
}

void TrainingLog::append(const LossReport& r, double wall_clock_s) {
  std::ofstream out(path_, std::ios::app);
  out << std::setprecision(9) << r.step << ',' << r.l_distil << ',' << r.l_dmd << ',' << r.l_adv
      << ',' << r.l_disc << ',' << r.weights.adv << ',' << r.weights.dmd << ','
      << std::setprecision(6) << wall_clock_s << '\n';
}

std::vector<LossReport> run_distillation(DistillState& state, const denoiser::LatentPairs& data,
                                         const DistillConfig& cfg, const NoiseSchedule& schedule,
                                         const DistillRunConfig& run) {
  data.validate();
  std::unique_ptr<TrainingLog> log;
  if (!run.log_path.empty()) log = std::make_unique<TrainingLog>(run.log_path);
  const auto start = std::chrono::steady_clock::now();
  std::vector<LossReport> reports;
  for (int k = 0; k < run.steps; ++k) {
    auto idx = torch::randint(data.size(), {cfg.batch_size}, state.gen, torch::kLong);
    auto report = distill_step(state, data.z_h.index_select(0, idx), data.z_l.index_select(0, idx),
                               cfg, schedule);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log) log->append(report, elapsed);
    reports.push_back(report);
    if (run.checkpoint_every > 0 && !run.checkpoint_dir.empty() &&
        state.step % run.checkpoint_every == 0) {
      denoiser::save_denoiser(
          run.checkpoint_dir / (run.checkpoint_tag + "-step" + std::to_string(state.step) + ".ckpt"),
          *state.student, {{"step", state.step}});
    }
  }
  return reports;
}

}  // namespace flashsr::distill
