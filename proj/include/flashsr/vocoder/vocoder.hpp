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
#include <vector>

#include <torch/torch.h>

#include "flashsr/dsp/spectral.hpp"
#include "flashsr/dsp/waveform.hpp"
#include "json.hpp"

namespace flashsr::vocoder {

struct CqtScale {
  int hop = 256;
  int bins_per_octave = 12;
  int octaves = 6;
  double fmin_hz = 110.0;
  int band_groups = 3;  // octave-band groups, each with its own conv stack

  int n_bins() const { return bins_per_octave * octaves; }
};

struct VocoderConfig {
  int n_mels = 64;
  int sample_rate = 16000;
  std::vector<int> upsample_rates = {5, 4, 4, 2};  // product = mel hop
  int initial_channels = 128;                     // halves after each stage
  std::vector<int> resblock_dilations = {1, 3};
  int resblock_kernel = 3;
  int aa_taps = 12;  // anti-aliasing FIR length
  std::vector<int> mpd_periods = {2, 3, 5, 7, 11};
  std::vector<CqtScale> cqt_scales = {CqtScale{}};
  bool fuse_lr = true;

  void validate() const;
  int hop() const;
  int stage_channels(int stage) const;  // channels after upsample stage k
  nlohmann::json to_json() const;
  static VocoderConfig from_json(const nlohmann::json& j);
  static VocoderConfig desk();
  static VocoderConfig paper();  // 48 kHz, 256 mels, hop 480
};

// Kaiser-windowed sinc lowpass with cutoff at a quarter of the sampling rate,
// normalized to unit DC gain.
torch::Tensor half_band_kernel(int taps);

// x + sin^2(alpha x) / alpha, alpha learned per channel (log-parameterized).
class SnakeImpl : public torch::nn::Module {
 public:
  explicit SnakeImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::Tensor log_alpha_;
};
TORCH_MODULE(Snake);

// 2x upsample -> snake -> lowpass and 2x downsample. Length preserving.
class AntiAliasedActivationImpl : public torch::nn::Module {
 public:
  AntiAliasedActivationImpl(int channels, int taps);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  Snake act_{nullptr};
  torch::Tensor kernel_;
  int channels_;
  int taps_;
};
TORCH_MODULE(AntiAliasedActivation);

// Residual stack of dilated convolutions, each preceded by an anti-aliased
// periodic activation.
class AmpBlockImpl : public torch::nn::Module {
 public:
  AmpBlockImpl(int channels, int kernel, const std::vector<int>& dilations, int taps);
  torch::Tensor forward(torch::Tensor x);

 private:
  std::vector<AntiAliasedActivation> acts_;
  std::vector<torch::nn::Conv1d> convs_;
};
TORCH_MODULE(AmpBlock);

// Strided Conv1d + LeakyReLU stages that take the low-resolution waveform
// [B, 1, hop T] to one feature map per generator stage, stage k shaped like
// the generator's stage-k output [B, ch_k, T prod(rates[0..k])].
class LrEncoderImpl : public torch::nn::Module {
 public:
  explicit LrEncoderImpl(const VocoderConfig& cfg);
  std::vector<torch::Tensor> forward(const torch::Tensor& lr);

 private:
  torch::nn::Conv1d input_{nullptr};
  std::vector<torch::nn::Conv1d> down_;  // down_[k] maps stage k+1 -> stage k
};
TORCH_MODULE(LrEncoder);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const VocoderConfig& cfg);

  // mel [B, F, T], lr [B, hop T] -> waveform [B, hop T]. Throws
  // InvalidArgument on a length mismatch.
  torch::Tensor forward(const torch::Tensor& mel, const torch::Tensor& lr);
  // Same, with explicit per-stage features; an empty list runs the generator
  // alone.
  torch::Tensor forward_with(const torch::Tensor& mel, const std::vector<torch::Tensor>& lr_feats);
  std::vector<torch::Tensor> lr_encode(const torch::Tensor& lr);
  // Per-stage shapes for batch b and T mel frames.
  std::vector<std::vector<int64_t>> stage_shapes(int64_t b, int64_t frames) const;

  const VocoderConfig& config() const { return cfg_; }

 private:
  VocoderConfig cfg_;
  torch::nn::Conv1d pre_{nullptr};
  std::vector<torch::nn::ConvTranspose1d> ups_;
  std::vector<AmpBlock> blocks_;
  AntiAliasedActivation post_act_{nullptr};
  torch::nn::Conv1d post_{nullptr};
  LrEncoder encoder_{nullptr};
};
TORCH_MODULE(Generator);

// Elementwise sum; the lr side may be undefined (identity).
torch::Tensor feature_fuse(const torch::Tensor& gen_feat, const torch::Tensor& lr_feat);

// Single-waveform entry point. `lr` must already be at the target rate with
// hop * T samples.
dsp::Waveform generate_waveform(Generator& gen, const dsp::MelSpectrogram& mel,
                                const dsp::Waveform& lr);

struct DiscOutput {
  std::vector<torch::Tensor> scores;                 // one map per sub-discriminator
  std::vector<std::vector<torch::Tensor>> features;  // intermediate activations
};

// [B, N] -> [B, 1, ceil(N / p), p], reflect-padding the tail.
torch::Tensor period_reshape(const torch::Tensor& x, int period);

class PeriodDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PeriodDiscriminatorImpl(int period);
  std::pair<torch::Tensor, std::vector<torch::Tensor>> forward(const torch::Tensor& x);

 private:
  int period_;
  std::vector<torch::nn::Conv2d> convs_;
  torch::nn::Conv2d post_{nullptr};
};
TORCH_MODULE(PeriodDiscriminator);

class MultiPeriodDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit MultiPeriodDiscriminatorImpl(const std::vector<int>& periods);
  DiscOutput forward(const torch::Tensor& x);

 private:
  std::vector<PeriodDiscriminator> subs_;
};
TORCH_MODULE(MultiPeriodDiscriminator);

// Constant-Q transform by a complex kernel bank: bin k sits at
// fmin 2^(k / bpo) with a Hann window of ceil(Q sr / f_k) samples,
// Q = 1 / (2^(1/bpo) - 1).
class CqtTransformImpl : public torch::nn::Module {
 public:
  CqtTransformImpl(const CqtScale& scale, int sample_rate);
  // [B, N] -> [B, 2, bins, frames] (real, imag).
  torch::Tensor forward(const torch::Tensor& x);
  // [B, N] -> [B, bins, frames].
  torch::Tensor magnitude(const torch::Tensor& x);
  std::vector<double> center_frequencies() const;
  const CqtScale& scale() const { return scale_; }

 private:
  CqtScale scale_;
  int sample_rate_;
  int kernel_len_;
  torch::Tensor kernels_;  // [2 bins, 1, kernel_len]
};
TORCH_MODULE(CqtTransform);

// One CQT scale: the bins are split into octave-band groups, each group is
// convolved by its own stack, and the group maps are concatenated along
// frequency for the shared head.
class SubBandCqtDiscriminatorImpl : public torch::nn::Module {
 public:
  SubBandCqtDiscriminatorImpl(const CqtScale& scale, int sample_rate);
  std::pair<torch::Tensor, std::vector<torch::Tensor>> forward(const torch::Tensor& x);

 private:
  CqtTransform cqt_{nullptr};
  std::vector<std::pair<int, int>> bands_;  // [begin, end) bin ranges
  std::vector<torch::nn::Sequential> band_convs_;
  torch::nn::Conv2d merge_{nullptr};
  torch::nn::Conv2d post_{nullptr};
};
TORCH_MODULE(SubBandCqtDiscriminator);

class MultiScaleCqtDiscriminatorImpl : public torch::nn::Module {
 public:
  MultiScaleCqtDiscriminatorImpl(const std::vector<CqtScale>& scales, int sample_rate);
  DiscOutput forward(const torch::Tensor& x);

 private:
  std::vector<SubBandCqtDiscriminator> subs_;
};
TORCH_MODULE(MultiScaleCqtDiscriminator);

DiscOutput discriminate_mpd(MultiPeriodDiscriminator& d, const torch::Tensor& x);
DiscOutput discriminate_cqt(MultiScaleCqtDiscriminator& d, const torch::Tensor& x);

// Mean L1 over every matched feature map.
torch::Tensor feature_matching_loss(const DiscOutput& real, const DiscOutput& fake);
// Least-squares GAN terms summed over sub-discriminators.
torch::Tensor generator_adv_loss(const DiscOutput& fake);
torch::Tensor discriminator_loss(const DiscOutput& real, const DiscOutput& fake);

struct MelResolution {
  int window;
  int hop;
  int n_mels;
};

// Default set for a sample rate: windows 256 / 512 / 1024 at 16 kHz, scaled.
std::vector<MelResolution> default_mel_resolutions(int sample_rate);

// Mean over resolutions of the mean L1 between natural-log mels (floor
// 1e-5). a, b: [B, N].
torch::Tensor msmel_loss(const torch::Tensor& a, const torch::Tensor& b,
                         const std::vector<MelResolution>& resolutions, int sample_rate);

struct VocoderPair {
  dsp::Waveform hr;  // target
  dsp::Waveform lr;  // low-resolution input, already at the target rate
};

struct VocoderTrainConfig {
  int steps = 2000;
  int batch_size = 4;
  int segment_frames = 32;
  double lr = 2e-4;
  double disc_lr = 2e-4;
  double lr_decay = 0.9999996;  // per step
  double lambda_mel = 45.0;
  double lambda_fm = 2.0;
  double lambda_adv = 1.0;
  int adv_start_step = 0;  // adversarial terms and discriminator updates from here on
  uint64_t seed = 0;
  dsp::MelConfig mel = dsp::MelConfig::desk();

  void validate() const;
  static VocoderTrainConfig paper();  // lr 5e-5
};

// lr0 * decay^step.
double decayed_lr(double lr0, double decay, int64_t step);

struct VocoderStepReport {
  int64_t step = 0;
  double mel = 0.0;
  double fm = 0.0;
  double adv = 0.0;
  double disc = 0.0;
  double lr = 0.0;
};

struct VocoderTrainState {
  Generator generator{nullptr};
  MultiPeriodDiscriminator mpd{nullptr};
  MultiScaleCqtDiscriminator cqt{nullptr};
  std::unique_ptr<torch::optim::AdamW> gen_opt;
  std::unique_ptr<torch::optim::AdamW> disc_opt;
  torch::Generator rng;
  int64_t step = 0;
};

VocoderTrainState make_vocoder_state(const VocoderConfig& cfg, const VocoderTrainConfig& train);

// Alternating generator / discriminator updates on random segments. Throws
// InvalidArgument on an empty dataset or a clip shorter than one segment.
std::vector<VocoderStepReport> train_vocoder(VocoderTrainState& state,
                                             const std::vector<VocoderPair>& dataset,
                                             const VocoderTrainConfig& cfg, int steps);

void save_vocoder(const std::filesystem::path& path, Generator& gen,
                  const nlohmann::json& meta = {});
Generator load_vocoder(const std::filesystem::path& path);

}  // namespace flashsr::vocoder
