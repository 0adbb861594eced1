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

namespace flashsr::denoiser {

struct LoraConfig {
  int rank = 8;
  double scale = 1.0;
};

// Linear layer with an optional low-rank adapter:
//   y = W x + b + scale * B (A x)
// A is [rank, in] (uniform init), B is [out, rank] (zero init), so a freshly
// enabled adapter leaves the output unchanged.
class LoraLinearImpl : public torch::nn::Module {
 public:
  LoraLinearImpl(int64_t in_features, int64_t out_features, bool bias = true);

  torch::Tensor forward(const torch::Tensor& x);

  // Registers lora_a / lora_b and freezes the base weights.
  void enable_adapter(const LoraConfig& cfg);
  bool has_adapter() const { return lora_a.defined(); }
  LoraConfig adapter_config() const {
    return {has_adapter() ? static_cast<int>(lora_a.size(0)) : 0, scale_};
  }

  // Folds scale * B A into W (adapter kept, but bypassed) / subtracts it again.
  void merge();
  void unmerge();
  bool merged() const { return merged_; }

  // Unmerges if needed and bypasses the adapter: base behavior again.
  void deactivate();
  void activate() { active_ = true; }

  torch::nn::Linear base{nullptr};
  torch::Tensor lora_a, lora_b;

 private:
  double scale_ = 1.0;
  bool merged_ = false;
  bool active_ = true;
};
TORCH_MODULE(LoraLinear);

}  // namespace flashsr::denoiser
