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

#include "flashsr/dsp/waveform.hpp"

namespace flashsr::dsp {

// Kaiser-windowed sinc interpolation parameters.
struct SincResamplerConfig {
  int zero_crossings = 32;  // half-width of the kernel, in zero crossings
  double rolloff = 0.95;    // passband edge relative to the lower Nyquist
  double kaiser_beta = 8.6;
};

// Band-limited resampling to target_rate. Output length is
// round(n * target_rate / sample_rate). Same-rate input is returned verbatim.
// Throws InvalidArgument for a non-positive target rate.
Waveform resample_sinc(const Waveform& w, int target_rate, const SincResamplerConfig& cfg = {});

}  // namespace flashsr::dsp
