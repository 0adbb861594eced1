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
#include <vector>

#include <torch/torch.h>

#include "flashsr/denoiser/denoiser.hpp"
#include "flashsr/diffusion/diffusion.hpp"

namespace flashsr::denoiser {

// Paired latents, both [N, C, H, W]: high resolution target and the
// low-resolution condition.
struct LatentPairs {
  torch::Tensor z_h;
  torch::Tensor z_l;

  int64_t size() const { return z_h.defined() ? z_h.size(0) : 0; }
  void validate() const;
};

struct TeacherTrainConfig {
  int steps = 2000;
  int batch_size = 4;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double cond_dropout = 0.1;  // probability of the null condition per sample
  uint64_t seed = 0;
  int checkpoint_every = 0;   // 0: never
  std::filesystem::path checkpoint_dir;
};

struct TeacherTrainReport {
  std::vector<double> loss;  // per step
  std::vector<std::filesystem::path> checkpoints;
};

// Minimizes E || v_hat - v_target ||^2 with t ~ U(0, 1) and per-sample
// condition dropout. Throws InvalidArgument on an empty dataset.
TeacherTrainReport train_teacher(VModel& model, const LatentPairs& data,
                                 const diffusion::NoiseSchedule& schedule,
                                 const TeacherTrainConfig& cfg);

// Mean v-loss over a fixed t grid (t = (k + 0.5) / n_t) with seeded noise;
// an undefined-cond evaluation when `conditional` is false.
double evaluate_v_loss(VModel& model, const LatentPairs& data,
                       const diffusion::NoiseSchedule& schedule, int n_t, uint64_t seed,
                       bool conditional = true);

}  // namespace flashsr::denoiser
