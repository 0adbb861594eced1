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

#include "flashsr/dsp/spectral.hpp"

#include <cmath>
#include <string>

#include "flashsr/error.hpp"

namespace flashsr::dsp {

void MelConfig::validate() const {
  if (hop <= 0 || window_size < hop) {
    throw InvalidArgument("mel config needs window_size >= hop > 0");
  }
  if (n_mels < 1) throw InvalidArgument("mel config needs n_mels >= 1");
  if (sample_rate <= 0) throw InvalidArgument("mel config needs a positive sample rate");
  if (!(log_floor > 0.0)) throw InvalidArgument("mel log floor must be positive");
}

MelConfig MelConfig::paper() { return {2048, 480, 256, 48000, 1e-5}; }
MelConfig MelConfig::desk() { return {640, 160, 64, 16000, 1e-5}; }

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

torch::Tensor stft_magnitude(const torch::Tensor& signal, int window, int hop) {
  const long n = signal.size(-1);
  const long frames = n / hop;
  auto shape = signal.sizes().vec();
  shape.back() = window / 2 + 1;
  shape.push_back(frames);
  if (frames == 0) return torch::zeros(shape, signal.options());

  const long left = (window - hop) / 2;
  const long right = (window - hop) - left;
  auto flat = signal.reshape({-1, n});
  auto padded = torch::constant_pad_nd(flat, {left, right}, 0.0);
  auto win = torch::hann_window(window, torch::TensorOptions().dtype(signal.dtype()));
  auto spec = torch::stft(padded, window, hop, window, win, /*normalized=*/false,
                          /*onesided=*/true, /*return_complex=*/true);
  auto mag = torch::abs(spec).narrow(-1, 0, frames);
  return mag.reshape(shape);
}

torch::Tensor mel_filterbank(int n_mels, int n_fft, int sample_rate, torch::ScalarType dtype) {
  const int bins = n_fft / 2 + 1;
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(mel_hi * i / (n_mels + 1));

  auto fb = torch::zeros({n_mels, bins}, torch::kFloat64);
  auto acc = fb.accessor<double, 2>();
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    double area = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f <= center) {
        w = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        w = (hi - f) / (hi - center);
      }
      acc[m][k] = w;
      area += w;
    }
    if (area > 0.0) {
      for (int k = 0; k < bins; ++k) acc[m][k] /= area;
    } else {
      const long nearest = std::lround(center * n_fft / sample_rate);
      acc[m][std::min<long>(nearest, bins - 1)] = 1.0;
    }
  }
  return fb.to(dtype);
}

std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
  const double mel_hi = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> centers(cfg.n_mels);
  for (int m = 0; m < cfg.n_mels; ++m) centers[m] = mel_to_hz(mel_hi * (m + 1) / (cfg.n_mels + 1));
  return centers;
}

torch::Tensor to_tensor(const Waveform& w, torch::ScalarType dtype) {
  return torch::from_blob(const_cast<float*>(w.samples.data()),
                          {static_cast<long>(w.samples.size())}, torch::kFloat32)
      .to(dtype);
}

Waveform from_tensor(const torch::Tensor& samples, int sample_rate) {
  auto flat = samples.detach().to(torch::kFloat32).contiguous().reshape({-1});
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(flat.data_ptr<float>(), flat.data_ptr<float>() + flat.numel());
  return w;
}

torch::Tensor stft_mag(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  return stft_magnitude(to_tensor(w, torch::kFloat64), cfg.window_size, cfg.hop);
}

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  if (w.sample_rate != cfg.sample_rate) {
    throw InvalidArgument("mel_spectrogram: waveform rate " + std::to_string(w.sample_rate) +
                          " != config rate " + std::to_string(cfg.sample_rate));
  }
  const auto fb = mel_filterbank(cfg.n_mels, cfg.window_size, cfg.sample_rate);
  const auto mag = stft_mag(w, cfg);
  auto values = torch::log(torch::clamp_min(torch::matmul(fb, mag), cfg.log_floor));
  return {values.to(torch::kFloat32), cfg};
}

torch::Tensor log_mel(const torch::Tensor& audio, const torch::Tensor& filterbank, int window,
                      int hop, double log_floor) {
  auto mag = stft_magnitude(audio, window, hop);
  return torch::log(torch::clamp_min(torch::matmul(filterbank.to(mag.dtype()), mag), log_floor));
}

}  // namespace flashsr::dsp
