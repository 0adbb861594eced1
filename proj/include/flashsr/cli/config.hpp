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
#include <optional>
#include <string>
#include <vector>

#include "flashsr/codec/vae.hpp"
#include "flashsr/denoiser/denoiser.hpp"
#include "flashsr/denoiser/lora.hpp"
#include "flashsr/denoiser/teacher.hpp"
#include "flashsr/distill/distill.hpp"
#include "flashsr/dsp/lowpass.hpp"
#include "flashsr/dsp/spectral.hpp"
#include "flashsr/error.hpp"
#include "flashsr/vocoder/vocoder.hpp"

namespace flashsr::cli {

// Malformed file, unknown key or out-of-range value. The message starts with
// the offending "section.key".
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class Profile { kDesk, kPaper };
std::string to_string(Profile p);
Profile parse_profile(const std::string& s);

struct EvalSettings {
  std::vector<double> cutoffs_hz;  // empty: scaled 4 / 8 / 12 kHz
  int rtf_repeats = 5;
  int teacher_steps = 100;
};

struct RunConfig {
  Profile profile = Profile::kDesk;
  uint64_t seed = 0;
  std::string device = "cpu";
  std::string dataset_dir;  // empty: synthesized corpus
  int corpus_clips = 10;
  double clip_seconds = 1.0;

  dsp::MelConfig mel;
  dsp::LowpassSimConfig lowpass;
  codec::CodecConfig codec;
  codec::CodecTrainConfig codec_train;
  denoiser::DenoiserConfig denoiser;
  denoiser::TeacherTrainConfig teacher_train;
  denoiser::LoraConfig lora;
  distill::DistillConfig distill;
  vocoder::VocoderConfig vocoder;
  vocoder::VocoderTrainConfig vocoder_train;
  EvalSettings eval;

  static RunConfig for_profile(Profile p);

  // Cross-module consistency (rates, mel shapes, latent channels).
  void validate() const;

  std::string to_ini() const;
  // Starts from the defaults of the file's run.profile (or `profile` when
  // given, which wins), then applies every key. Throws ConfigError.
  static RunConfig from_ini(const std::string& text, std::optional<Profile> profile = {});
  static RunConfig load(const std::filesystem::path& path, std::optional<Profile> profile = {});

  // sha1 of to_ini(), lowercase hex.
  std::string hash() const;
};

}  // namespace flashsr::cli
