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
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "flashsr/dsp/spectral.hpp"
#include "json.hpp"

namespace flashsr::codec {

struct CodecConfig {
  int channels = 16;      // C
  int compression = 8;    // r, a power of two
  int base_width = 32;

  void validate() const;
  int stages() const;     // log2(r)
  nlohmann::json to_json() const;
  static CodecConfig from_json(const nlohmann::json& j);
};

// Latent [C, T/r, F/r]; `frames` remembers the unpadded T for decode.
struct LatentGrid {
  torch::Tensor values;
  long frames = 0;
};

// Convolutional VAE over log-mel images laid out as [B, 1, T, F].
class MelVaeImpl : public torch::nn::Module {
 public:
  explicit MelVaeImpl(const CodecConfig& cfg);

  // mels [B, F, T] -> (mean, logvar), each [B, C, T'/r, F/r], T' the padded
  // frame count. Inputs are normalized and latents scaled internally.
  std::pair<torch::Tensor, torch::Tensor> posterior(const torch::Tensor& mels);
  // latents [B, C, T'/r, F/r] -> mels [B, F, T'].
  torch::Tensor reconstruct(const torch::Tensor& latents);

  // Frames after reflect-padding T up to a multiple of r.
  long padded_frames(long frames) const;

  const CodecConfig& config() const { return cfg_; }

  // Dataset statistics, stored as buffers so they travel with checkpoints.
  torch::Tensor mel_mean, mel_std, latent_scale;

 private:
  torch::Tensor pad_time(const torch::Tensor& mels) const;

  CodecConfig cfg_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(MelVae);

// Posterior mean; bit-deterministic. Throws InvalidArgument when F is not a
// multiple of r.
LatentGrid encode(MelVae& vae, const dsp::MelSpectrogram& mel);
// Posterior sample with eps drawn from `gen`.
LatentGrid encode_sampled(MelVae& vae, const dsp::MelSpectrogram& mel, torch::Generator gen);
// Decodes and crops the time padding.
dsp::MelSpectrogram decode(MelVae& vae, const LatentGrid& z, const dsp::MelConfig& mel_cfg);

// Batched helpers over equal-length mels [B, F, T].
torch::Tensor encode_batch(MelVae& vae, const torch::Tensor& mels);
torch::Tensor decode_batch(MelVae& vae, const torch::Tensor& latents, long frames);

struct CodecTrainConfig {
  int epochs = 30;
  int batch_size = 4;
  double lr = 5e-4;
  double beta = 1e-4;  // KL weight
  uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty: no per-epoch checkpoints
};

struct CodecTrainReport {
  std::vector<double> epoch_loss;    // mean total loss per epoch
  std::vector<double> epoch_recon;   // mean L1 per epoch
  std::vector<double> epoch_kl;      // mean beta-weighted KL per epoch
  std::vector<std::filesystem::path> checkpoints;
};

// Minimizes L1 reconstruction + beta KL on the given mels (all the same
// shape). Estimates the input normalization before training and the latent
// scale after. Throws InvalidArgument on an empty dataset.
CodecTrainReport train_codec(MelVae& vae, const std::vector<dsp::MelSpectrogram>& dataset,
                             const CodecTrainConfig& cfg);

void save_codec(const std::filesystem::path& path, MelVae& vae, const nlohmann::json& meta = {});
MelVae load_codec(const std::filesystem::path& path);

}  // namespace flashsr::codec
