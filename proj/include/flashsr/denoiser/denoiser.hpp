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

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "flashsr/denoiser/lora.hpp"
#include "flashsr/diffusion/diffusion.hpp"
#include "json.hpp"

namespace flashsr::denoiser {

// Conditional v-prediction network f(z_t, t, z_l). The same class serves as
// teacher and, with LoRA adapters enabled, as student.
class VModel : public torch::nn::Module {
 public:
  // z_t [B, C, H, W], t [B] in [0, 1]; cond shaped like z_t, or undefined for
  // the unconditional pathway (learned null latent).
  virtual torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& t,
                                const torch::Tensor& cond) = 0;
  // The learned null latent broadcast to `like`'s shape.
  virtual torch::Tensor null_condition(const torch::Tensor& like) const = 0;
  // Layers that receive adapters (the attention projections).
  virtual std::vector<LoraLinear> lora_targets() = 0;
  // Freshly initialized network with the same configuration.
  virtual std::shared_ptr<VModel> clone_architecture() const = 0;
  virtual nlohmann::json config_json() const = 0;
};

using VModelPtr = std::shared_ptr<VModel>;

// Shape-checked forward. Throws InvalidArgument on mismatched shapes or t
// outside [0, 1].
torch::Tensor predict_v(VModel& model, const torch::Tensor& z_t, const torch::Tensor& t,
                        const torch::Tensor& cond);

diffusion::VPredictor as_predictor(const VModelPtr& model);

// --- U-Net --------------------------------------------------------------

struct DenoiserConfig {
  int latent_channels = 16;
  std::vector<int> widths = {32, 64, 128};  // one per level; the last hosts attention
  int time_dim = 128;
  int heads = 4;

  void validate() const;
  nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
};

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in, int out, int time_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
  torch::nn::Linear time_proj_{nullptr};
};
TORCH_MODULE(ResBlock);

// Multi-head self-attention over the H*W positions; q/k/v/out are the LoRA
// targets.
class AttentionBlockImpl : public torch::nn::Module {
 public:
  AttentionBlockImpl(int channels, int heads);
  torch::Tensor forward(const torch::Tensor& x);

  LoraLinear q{nullptr}, k{nullptr}, v{nullptr}, out{nullptr};

 private:
  torch::nn::GroupNorm norm_{nullptr};
  int heads_;
};
TORCH_MODULE(AttentionBlock);

// Three-level U-shaped network. z_l is concatenated with z_t on the channel
// axis at the input; self-attention sits at the lowest resolution.
class UNetDenoiser : public VModel {
 public:
  explicit UNetDenoiser(const DenoiserConfig& cfg);

  torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& t,
                        const torch::Tensor& cond) override;
  torch::Tensor null_condition(const torch::Tensor& like) const override;
  std::vector<LoraLinear> lora_targets() override;
  VModelPtr clone_architecture() const override;
  nlohmann::json config_json() const override;

  const DenoiserConfig& config() const { return cfg_; }

 private:
  DenoiserConfig cfg_;
  torch::nn::Sequential time_mlp_{nullptr};
  torch::nn::Conv2d conv_in_{nullptr};
  ResBlock down0_{nullptr}, down1_{nullptr}, mid0_{nullptr}, mid1_{nullptr};
  ResBlock up1_{nullptr}, up0_{nullptr};
  torch::nn::Conv2d downsample0_{nullptr}, downsample1_{nullptr};
  torch::nn::Conv2d upconv1_{nullptr}, upconv0_{nullptr};
  AttentionBlock attention_{nullptr};
  torch::nn::GroupNorm norm_out_{nullptr};
  torch::nn::Conv2d conv_out_{nullptr};
  torch::Tensor null_latent_;
};

// --- MLP variant for low-dimensional toy latents -------------------------

struct ToyDenoiserConfig {
  int latent_channels = 2;  // latents are [B, C, 1, 1]
  int hidden = 128;
  int layers = 3;
  int time_dim = 32;

  nlohmann::json to_json() const;
  static ToyDenoiserConfig from_json(const nlohmann::json& j);
};

// Residual MLP over (z_t, z_l, t); its hidden projections are the LoRA
// targets.
class ToyDenoiser : public VModel {
 public:
  explicit ToyDenoiser(const ToyDenoiserConfig& cfg);

  torch::Tensor forward(const torch::Tensor& z_t, const torch::Tensor& t,
                        const torch::Tensor& cond) override;
  torch::Tensor null_condition(const torch::Tensor& like) const override;
  std::vector<LoraLinear> lora_targets() override;
  VModelPtr clone_architecture() const override;
  nlohmann::json config_json() const override;

 private:
  ToyDenoiserConfig cfg_;
  torch::nn::Linear in_{nullptr}, out_{nullptr};
  std::vector<LoraLinear> hidden_;
  torch::nn::Sequential time_mlp_{nullptr};
  torch::Tensor null_latent_;
};

VModelPtr make_model(const nlohmann::json& config);

// --- LoRA student ----------------------------------------------------------

// Student initialized with the teacher's weights; every target gets an
// adapter and only adapter parameters remain trainable.
VModelPtr apply_lora(const VModel& teacher, const LoraConfig& lora);

void merge_lora(VModel& model);
void unmerge_lora(VModel& model);
void deactivate_lora(VModel& model);

// Freezes every parameter (teacher use).
void freeze(torch::nn::Module& model);

// Adapter parameters are stored next to, and separately named from, the base.
void save_denoiser(const std::filesystem::path& path, VModel& model,
                   const nlohmann::json& meta = {});
VModelPtr load_denoiser(const std::filesystem::path& path);

}  // namespace flashsr::denoiser
