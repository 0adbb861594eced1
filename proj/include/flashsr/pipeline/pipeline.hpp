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
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "flashsr/codec/vae.hpp"
#include "flashsr/denoiser/denoiser.hpp"
#include "flashsr/denoiser/teacher.hpp"
#include "flashsr/diffusion/diffusion.hpp"
#include "flashsr/dsp/lowpass.hpp"
#include "flashsr/dsp/spectral.hpp"
#include "flashsr/eval/metrics.hpp"
#include "flashsr/vocoder/vocoder.hpp"

namespace flashsr::pipeline {

// Synthetic full-band clips cycling through three categories: "harmonic"
// (1/k partials up to Nyquist), "noise" (enveloped pink-ish noise) and
// "sweep" (log chirp with partials).
std::vector<eval::EvalItem> synth_corpus(int count, double seconds, int sample_rate,
                                         uint64_t seed);

// Every *.wav under `dir` (sorted by name), downmixed and resampled to
// `sample_rate`, cut or zero-padded to exactly `seconds`.
std::vector<eval::EvalItem> load_corpus(const std::filesystem::path& dir, double seconds,
                                        int sample_rate);

struct TrainingClip {
  dsp::Waveform hr;
  dsp::Waveform lr;  // same rate and length as hr
  dsp::FilterSpec filter;
};

// One simulated low-resolution version per clip; clip i draws its filter from
// a generator seeded by (seed, i).
std::vector<TrainingClip> simulate_pairs(const std::vector<eval::EvalItem>& corpus,
                                         const dsp::LowpassSimConfig& cfg, uint64_t seed);

// Stacked log-mels [N, F, T] (all clips share a length).
torch::Tensor mel_batch(const std::vector<dsp::Waveform>& clips, const dsp::MelConfig& cfg);
std::vector<dsp::MelSpectrogram> mel_list(const std::vector<dsp::Waveform>& clips,
                                          const dsp::MelConfig& cfg);

// Posterior-mean latents of hr and lr mels.
denoiser::LatentPairs encode_pairs(codec::MelVae& codec, const std::vector<TrainingClip>& clips,
                                   const dsp::MelConfig& cfg);

std::vector<vocoder::VocoderPair> vocoder_pairs(const std::vector<TrainingClip>& clips);

// z_l -> z_h estimate, [B, C, H, W] in and out.
using LatentSampler = std::function<torch::Tensor(const torch::Tensor& z_l)>;

LatentSampler student_sampler(const denoiser::VModelPtr& student,
                              const diffusion::NoiseSchedule& schedule, uint64_t seed);
// `steps` uniform solver steps from t = 1 with guidance `omega`.
LatentSampler teacher_sampler(const denoiser::VModelPtr& teacher,
                              const diffusion::NoiseSchedule& schedule, int steps, double omega,
                              uint64_t seed,
                              diffusion::SolverKind solver = diffusion::SolverKind::kDdim);

struct SrSystem {
  codec::MelVae codec{nullptr};
  vocoder::Generator vocoder{nullptr};
  LatentSampler sampler;
  dsp::MelConfig mel;
};

// Resamples `input` to the system rate, encodes its mel, samples a latent,
// decodes it and vocodes with the low-resolution waveform. The output has the
// input's duration at the system rate; samples past the last whole frame are
// copied from the resampled input.
dsp::Waveform super_resolve(SrSystem& sys, const dsp::Waveform& input);

eval::SrModel as_sr_model(SrSystem& sys);
eval::SrModel identity_model();

}  // namespace flashsr::pipeline
