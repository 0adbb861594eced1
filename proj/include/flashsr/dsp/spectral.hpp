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

#include "flashsr/dsp/waveform.hpp"

namespace flashsr::dsp {

struct MelConfig {
  int window_size = 640;
  int hop = 160;
  int n_mels = 64;
  int sample_rate = 16000;
  double log_floor = 1e-5;

  void validate() const;
  int n_bins() const { return window_size / 2 + 1; }
  // Frames produced for n samples: floor(n / hop).
  long frames_for(long n_samples) const { return n_samples / hop; }

  static MelConfig paper();  // 2048 / 480 / 256 mels at 48 kHz
  static MelConfig desk();   // 640 / 160 / 64 mels at 16 kHz

  bool operator==(const MelConfig&) const = default;
};

// Log-mel matrix [n_mels x T], float32.
struct MelSpectrogram {
  torch::Tensor values;
  MelConfig config;

  long n_mels() const { return values.size(0); }
  long frames() const { return values.size(1); }
};

// Hann-windowed magnitude STFT over the last dimension of `signal`.
// The signal is zero padded by (window - hop) / 2 on the left and the rest of
// (window - hop) on the right, so n samples give floor(n / hop) frames.
// Result shape [..., window / 2 + 1, floor(n / hop)]; differentiable.
torch::Tensor stft_magnitude(const torch::Tensor& signal, int window, int hop);

// HTK-scale triangular filterbank [n_mels x (n_fft/2 + 1)] over [0, rate/2],
// each row normalized to unit sum. A row too narrow to catch any bin gets a
// single unit weight on the bin nearest its center.
torch::Tensor mel_filterbank(int n_mels, int n_fft, int sample_rate,
                             torch::ScalarType dtype = torch::kFloat64);

// Center frequency (Hz) of every mel row.
std::vector<double> mel_center_frequencies(const MelConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Magnitude matrix [(window/2 + 1) x T] in float64.
torch::Tensor stft_mag(const Waveform& w, const MelConfig& cfg);

// values = log(max(filterbank * |STFT|, log_floor)). Throws InvalidArgument
// when the waveform rate differs from cfg.sample_rate.
MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg);

// Batched, differentiable log-mel of audio [B, N] -> [B, n_mels, T].
torch::Tensor log_mel(const torch::Tensor& audio, const torch::Tensor& filterbank, int window,
                      int hop, double log_floor);

torch::Tensor to_tensor(const Waveform& w, torch::ScalarType dtype = torch::kFloat32);
Waveform from_tensor(const torch::Tensor& samples, int sample_rate);

}  // namespace flashsr::dsp
