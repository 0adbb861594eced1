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

#include "flashsr/denoiser/lora.hpp"

#include <cmath>

#include "flashsr/error.hpp"

namespace flashsr::denoiser {

LoraLinearImpl::LoraLinearImpl(int64_t in_features, int64_t out_features, bool bias) {
  base = register_module(
      "base", torch::nn::Linear(torch::nn::LinearOptions(in_features, out_features).bias(bias)));
}

torch::Tensor LoraLinearImpl::forward(const torch::Tensor& x) {
  auto y = base->forward(x);
  if (has_adapter() && active_ && !merged_) {
    y = y + scale_ * torch::matmul(torch::matmul(x, lora_a.t()), lora_b.t());
  }
  return y;
}

void LoraLinearImpl::enable_adapter(const LoraConfig& cfg) {
  if (cfg.rank < 1) throw InvalidArgument("LoRA rank must be >= 1");
  if (has_adapter()) throw InvalidArgument("LoRA adapter already enabled");
  const int64_t in = base->weight.size(1);
  const int64_t out = base->weight.size(0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  auto opts = base->weight.options().requires_grad(false);
  lora_a = register_parameter("lora_a", torch::empty({cfg.rank, in}, opts).uniform_(-bound, bound));
  lora_b = register_parameter("lora_b", torch::zeros({out, cfg.rank}, opts));
  scale_ = cfg.scale;
  for (auto& p : base->parameters()) p.set_requires_grad(false);
}

void LoraLinearImpl::merge() {
  if (!has_adapter() || !active_ || merged_) return;
  torch::NoGradGuard no_grad;
  base->weight.add_(scale_ * torch::matmul(lora_b, lora_a));
  merged_ = true;
}

void LoraLinearImpl::deactivate() {
  unmerge();
  active_ = false;
}

void LoraLinearImpl::unmerge() {
  if (!has_adapter() || !merged_) return;
  torch::NoGradGuard no_grad;
  base->weight.sub_(scale_ * torch::matmul(lora_b, lora_a));
  merged_ = false;
}

}  // namespace flashsr::denoiser
