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

#include "flashsr/dsp/lfr.hpp"

#include <algorithm>
#include <cmath>

#include "flashsr/error.hpp"

namespace flashsr::dsp {

LfrResult lfr_postprocess(const MelSpectrogram& gen_mel, const torch::Tensor& gen_stft,
                          const MelSpectrogram& input_mel, const torch::Tensor& input_stft,
                          double cutoff_hz) {
  const MelConfig& cfg = input_mel.config;
  if (!gen_mel.values.sizes().equals(input_mel.values.sizes()) ||
      !gen_stft.sizes().equals(input_stft.sizes())) {
    throw InvalidArgument("lfr_postprocess: generated and input shapes differ");
  }
  if (gen_stft.dim() != 2 || gen_stft.size(0) != cfg.n_bins()) {
    throw InvalidArgument("lfr_postprocess: stft must be [window/2+1, T]");
  }
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < cfg.sample_rate / 2.0)) {
    throw InvalidArgument("lfr_postprocess: cutoff outside Nyquist");
  }

  const auto centers = mel_center_frequencies(cfg);
  const long n_mels = input_mel.n_mels();
  const long split = std::lower_bound(centers.begin(), centers.end(), cutoff_hz) - centers.begin();

  const long band_lo = std::clamp<long>(split - kLfrRatioBandRows / 2, 0, n_mels);
  const long band_hi = std::clamp<long>(band_lo + kLfrRatioBandRows, 0, n_mels);
  auto band_energy = [&](const torch::Tensor& v) {
    return torch::exp(v.narrow(0, band_lo, band_hi - band_lo).to(torch::kFloat64))
        .sum()
        .item<double>();
  };
  const double e_in = band_energy(input_mel.values);
  const double e_gen = band_energy(gen_mel.values);

  LfrResult result;
  if (e_in > 0.0 && e_gen > 0.0 && std::isfinite(e_in / e_gen)) {
    result.scale = e_in / e_gen;
  } else {
    result.zero_energy_warning = true;
  }

  auto mel = gen_mel.values.clone();
  if (split < n_mels && result.scale != 1.0) {
    auto high = mel.narrow(0, split, n_mels - split);
    high.copy_(torch::clamp_min(high + std::log(result.scale), std::log(cfg.log_floor)));
  }
  if (split > 0) mel.narrow(0, 0, split).copy_(input_mel.values.narrow(0, 0, split));

  const long bins = gen_stft.size(0);
  const long bin_split =
      std::min<long>(bins, static_cast<long>(std::ceil(cutoff_hz * cfg.window_size / cfg.sample_rate)));
  auto stft = gen_stft.clone();
  if (bin_split < bins && result.scale != 1.0) stft.narrow(0, bin_split, bins - bin_split).mul_(result.scale);
  if (bin_split > 0) stft.narrow(0, 0, bin_split).copy_(input_stft.narrow(0, 0, bin_split));

  result.mel = {mel, cfg};
  result.stft = stft;
  return result;
}

}  // namespace flashsr::dsp
