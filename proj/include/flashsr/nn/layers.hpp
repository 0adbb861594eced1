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

#include <torch/torch.h>

namespace flashsr::nn {

// Largest group count <= preferred that divides channels.
int group_count(int channels, int preferred = 8);

torch::nn::GroupNorm group_norm(int channels);

int64_t count_parameters(const torch::nn::Module& m, bool trainable_only = false);

// Sinusoidal embedding of t in [0, 1] (scaled by 1000) -> [B, dim].
torch::Tensor timestep_embedding(const torch::Tensor& t, int dim);

}  // namespace flashsr::nn
