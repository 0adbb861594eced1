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

#include "flashsr/denoiser/teacher.hpp"

#include "flashsr/error.hpp"

namespace flashsr::denoiser {

void LatentPairs::validate() const {
  if (size() == 0) throw InvalidArgument("empty latent dataset");
  if (!z_l.defined() || !z_h.sizes().equals(z_l.sizes()) || z_h.dim() != 4) {
    throw InvalidArgument("latent pairs must both be [N, C, H, W]");
  }
}

TeacherTrainReport train_teacher(VModel& model, const LatentPairs& data,
                                 const diffusion::NoiseSchedule& schedule,
                                 const TeacherTrainConfig& cfg) {
  if (data.size() == 0) throw InvalidArgument("train_teacher: empty dataset");
  data.validate();

  auto gen = torch::make_generator<at::CPUGeneratorImpl>(cfg.seed);
  std::vector<torch::Tensor> params;
  for (auto& p : model.parameters()) {
    if (p.requires_grad()) params.push_back(p);
  }
  torch::optim::AdamW opt(params, torch::optim::AdamWOptions(cfg.lr).weight_decay(cfg.weight_decay));

  TeacherTrainReport report;
  const auto opts = data.z_h.options();
  model.train();
  for (int step = 0; step < cfg.steps; ++step) {
    auto idx = torch::randint(data.size(), {cfg.batch_size}, gen, torch::kLong);
    auto z0 = data.z_h.index_select(0, idx);
    auto cond = data.z_l.index_select(0, idx);
    auto t = torch::rand({cfg.batch_size}, gen, opts);
    auto eps = torch::randn(z0.sizes(), gen, opts);
    auto drop = torch::rand({cfg.batch_size, 1, 1, 1}, gen, opts) < cfg.cond_dropout;
    if (cfg.cond_dropout >= 1.0) {
      cond = model.null_condition(z0);
    } else if (cfg.cond_dropout > 0.0) {
      cond = torch::where(drop, model.null_condition(z0), cond);
    }

    auto z_t = diffusion::diffuse_forward(schedule, z0, t, eps);
    auto target = diffusion::v_target(schedule, z0, eps, t);
    auto loss = torch::mse_loss(model.forward(z_t, t, cond), target);
    opt.zero_grad();
    loss.backward();
    opt.step();
    report.loss.push_back(loss.item<double>());

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
        (step + 1) % cfg.checkpoint_every == 0) {
      auto path = cfg.checkpoint_dir / ("teacher-step" + std::to_string(step + 1) + ".ckpt");
      save_denoiser(path, model, {{"step", step + 1}, {"loss", report.loss.back()}});
      report.checkpoints.push_back(path);
    }
  }
  model.eval();
  return report;
}

double evaluate_v_loss(VModel& model, const LatentPairs& data,
                       const diffusion::NoiseSchedule& schedule, int n_t, uint64_t seed,
                       bool conditional) {
  data.validate();
  torch::NoGradGuard no_grad;
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(seed);
  double total = 0.0;
  for (int k = 0; k < n_t; ++k) {
    const double t = (k + 0.5) / n_t;
    auto eps = torch::randn(data.z_h.sizes(), gen, data.z_h.options());
    auto z_t = diffusion::diffuse_forward(schedule, data.z_h, t, eps);
    auto tb = torch::full({data.size()}, t, data.z_h.options());
    auto v = model.forward(z_t, tb, conditional ? data.z_l : torch::Tensor());
    total += torch::mse_loss(v, diffusion::v_target(schedule, data.z_h, eps, t)).item<double>();
  }
  return total / n_t;
}

}  // namespace flashsr::denoiser
