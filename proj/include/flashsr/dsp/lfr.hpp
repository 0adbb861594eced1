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

#include "flashsr/dsp/spectral.hpp"

namespace flashsr::dsp {

// Lower-frequency replacement: the classic post-processing that splices the
// input's low band into a generated spectrogram.
struct LfrResult {
  MelSpectrogram mel;
  torch::Tensor stft;  // magnitude, same shape as the inputs
  double scale = 1.0;  // linear-magnitude factor applied above the cutoff
  bool zero_energy_warning = false;
};

// Mel rows around the cutoff used to measure the energy ratio.
inline constexpr int kLfrRatioBandRows = 10;

// Rows whose center frequency is below cutoff_hz are copied from the input.
// Generated rows at or above it are multiplied (linear magnitude) by
// E_input / E_generated, both energies summed over the kLfrRatioBandRows mel
// rows straddling the cutoff. Zero energy on either side leaves scale = 1
// and raises the warning flag.
LfrResult lfr_postprocess(const MelSpectrogram& gen_mel, const torch::Tensor& gen_stft,
                          const MelSpectrogram& input_mel, const torch::Tensor& input_stft,
                          double cutoff_hz);

}  // namespace flashsr::dsp
