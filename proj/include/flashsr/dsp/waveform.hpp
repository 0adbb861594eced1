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

#include <cstddef>
#include <filesystem>
#include <vector>

namespace flashsr::dsp {

// Mono audio buffer.
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 0;

  Waveform() = default;
  Waveform(std::vector<float> s, int rate) : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  // Throws InvalidArgument unless n >= 1, rate > 0 and every sample is finite.
  void validate() const;
};

enum class WavEncoding { kPcm16, kFloat32 };

// Reads PCM16, PCM24, PCM32 or float32 WAV. Multi-channel input is downmixed
// by averaging the channels.
Waveform read_wav(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, const Waveform& wave,
               WavEncoding encoding = WavEncoding::kPcm16);

}  // namespace flashsr::dsp
