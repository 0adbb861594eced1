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

#include "flashsr/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "flashsr/distill/distill.hpp"
#include "flashsr/dsp/resample.hpp"
#include "flashsr/error.hpp"

namespace flashsr::pipeline {

namespace {

std::mt19937_64 item_rng(uint64_t seed, size_t index) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(index), 0x5eedu};
  return std::mt19937_64(seq);
}

void normalize_peak(std::vector<float>& x, double peak) {
  float m = 0.0f;
  for (float v : x) m = std::max(m, std::abs(v));
  if (m > 0.0f) {
    for (auto& v : x) v = static_cast<float>(v * peak / m);
  }
}

std::vector<float> harmonic_clip(long n, int sr, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f0 = 100.0 + 300.0 * u(rng);
  const double vib_rate = 3.0 + 3.0 * u(rng);
  const double vib_depth = 0.01 * u(rng);
  std::vector<float> x(n, 0.0f);
  for (int k = 1; k * f0 * (1.0 + vib_depth) < 0.95 * sr / 2.0; ++k) {
    const double amp = (0.5 + 0.5 * u(rng)) / k;
    double phase = 2.0 * std::numbers::pi * u(rng);
    for (long i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sr;
      const double f = k * f0 * (1.0 + vib_depth * std::sin(2.0 * std::numbers::pi * vib_rate * t));
      phase += 2.0 * std::numbers::pi * f / sr;
      x[i] += static_cast<float>(amp * std::sin(phase));
    }
  }
  const double attack = 0.02 * sr;
  for (long i = 0; i < n; ++i) {
    const double env = std::min(1.0, i / attack) * std::exp(-1.5 * i / static_cast<double>(sr));
    x[i] = static_cast<float>(x[i] * env);
  }
  return x;
}

std::vector<float> noise_clip(long n, int sr, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double am_rate = 2.0 + 4.0 * u(rng);
  const double tilt = 0.3 + 0.6 * u(rng);
  std::vector<float> x(n);
  double low = 0.0;
  for (long i = 0; i < n; ++i) {
    const double w = g(rng);
    low = tilt * low + (1.0 - tilt) * w;
    const double env = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * am_rate * i / sr);
    x[i] = static_cast<float>((0.4 * w + low) * env);
  }
  return x;
}

std::vector<float> sweep_clip(long n, int sr, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double f_start = 80.0 + 80.0 * u(rng);
  const double f_end = f_start * (8.0 + 8.0 * u(rng));
  const double dur = static_cast<double>(n) / sr;
  std::vector<float> x(n, 0.0f);
  double phase = 0.0;
  for (long i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f = f_start * std::pow(f_end / f_start, t / dur);
    phase += 2.0 * std::numbers::pi * f / sr;
    double s = 0.0;
    for (int k = 1; k * f < 0.95 * sr / 2.0; ++k) s += std::sin(k * phase) / k;
    x[i] = static_cast<float>(s);
  }
  return x;
}

}  // namespace

std::vector<eval::EvalItem> synth_corpus(int count, double seconds, int sample_rate,
                                         uint64_t seed) {
  if (count < 1 || !(seconds > 0.0) || sample_rate <= 0) {
    throw InvalidArgument("synth_corpus: need count >= 1, seconds > 0, rate > 0");
  }
  const long n = std::lround(seconds * sample_rate);
  std::vector<eval::EvalItem> out;
  for (int i = 0; i < count; ++i) {
    auto rng = item_rng(seed, static_cast<size_t>(i));
    eval::EvalItem item;
    std::vector<float> x;
    switch (i % 3) {
      case 0:
        item.category = "harmonic";
        x = harmonic_clip(n, sample_rate, rng);
        break;
      case 1:
        item.category = "noise";
        x = noise_clip(n, sample_rate, rng);
        break;
      default:
        item.category = "sweep";
        x = sweep_clip(n, sample_rate, rng);
        break;
    }
    normalize_peak(x, 0.5);
    char id[32];
    std::snprintf(id, sizeof(id), "clip%04d", i);
    item.id = id;
    item.hr = dsp::Waveform(std::move(x), sample_rate);
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<eval::EvalItem> load_corpus(const std::filesystem::path& dir, double seconds,
                                        int sample_rate) {
  if (!std::filesystem::is_directory(dir)) {
    throw InvalidArgument("dataset directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidArgument("no .wav files under " + dir.string());
  const size_t n = static_cast<size_t>(std::lround(seconds * sample_rate));
  std::vector<eval::EvalItem> out;
  for (const auto& f : files) {
    auto w = dsp::resample_sinc(dsp::read_wav(f), sample_rate);
    w.samples.resize(n, 0.0f);
    out.push_back({f.stem().string(), f.parent_path().filename().string(), std::move(w)});
  }
  return out;
}

std::vector<TrainingClip> simulate_pairs(const std::vector<eval::EvalItem>& corpus,
                                         const dsp::LowpassSimConfig& cfg, uint64_t seed) {
  std::vector<TrainingClip> out;
  for (size_t i = 0; i < corpus.size(); ++i) {
    auto rng = item_rng(seed, i);
    auto [lr, spec] = dsp::simulate_lr(corpus[i].hr, cfg, rng);
    out.push_back({corpus[i].hr, std::move(lr), spec});
  }
  return out;
}

std::vector<dsp::MelSpectrogram> mel_list(const std::vector<dsp::Waveform>& clips,
                                          const dsp::MelConfig& cfg) {
  std::vector<dsp::MelSpectrogram> out;
  for (const auto& c : clips) out.push_back(dsp::mel_spectrogram(c, cfg));
  return out;
}

torch::Tensor mel_batch(const std::vector<dsp::Waveform>& clips, const dsp::MelConfig& cfg) {
  if (clips.empty()) throw InvalidArgument("mel_batch: no clips");
  std::vector<torch::Tensor> mels;
  for (const auto& m : mel_list(clips, cfg)) mels.push_back(m.values);
  return torch::stack(mels);
}

denoiser::LatentPairs encode_pairs(codec::MelVae& codec, const std::vector<TrainingClip>& clips,
                                   const dsp::MelConfig& cfg) {
  std::vector<dsp::Waveform> hr, lr;
  for (const auto& c : clips) {
    hr.push_back(c.hr);
    lr.push_back(c.lr);
  }
  torch::NoGradGuard no_grad;
  codec->eval();
  denoiser::LatentPairs pairs;
  pairs.z_h = codec::encode_batch(codec, mel_batch(hr, cfg));
  pairs.z_l = codec::encode_batch(codec, mel_batch(lr, cfg));
  return pairs;
}

std::vector<vocoder::VocoderPair> vocoder_pairs(const std::vector<TrainingClip>& clips) {
  std::vector<vocoder::VocoderPair> out;
  for (const auto& c : clips) out.push_back({c.hr, c.lr});
  return out;
}

LatentSampler student_sampler(const denoiser::VModelPtr& student,
                              const diffusion::NoiseSchedule& schedule, uint64_t seed) {
  auto gen = std::make_shared<torch::Generator>(torch::make_generator<at::CPUGeneratorImpl>(seed));
  return [student, schedule, gen](const torch::Tensor& z_l) {
    return distill::one_step_sample(*student, schedule, z_l, *gen);
  };
}

LatentSampler teacher_sampler(const denoiser::VModelPtr& teacher,
                              const diffusion::NoiseSchedule& schedule, int steps, double omega,
                              uint64_t seed, diffusion::SolverKind solver) {
  if (steps < 1) throw InvalidArgument("teacher_sampler: steps must be >= 1");
  auto gen = std::make_shared<torch::Generator>(torch::make_generator<at::CPUGeneratorImpl>(seed));
  const auto grid = diffusion::uniform_grid(1.0, steps);
  return [teacher, schedule, gen, grid, omega, solver](const torch::Tensor& z_l) {
    torch::NoGradGuard no_grad;
    auto z = torch::randn(z_l.sizes(), *gen, z_l.options());
    return diffusion::sample(schedule, denoiser::as_predictor(teacher), z, grid, z_l, omega,
                             solver);
  };
}

dsp::Waveform super_resolve(SrSystem& sys, const dsp::Waveform& input) {
  input.validate();
  torch::NoGradGuard no_grad;
  const auto x = dsp::resample_sinc(input, sys.mel.sample_rate);
  const auto mel_lr = dsp::mel_spectrogram(x, sys.mel);
  const long frames = mel_lr.frames();
  if (frames < 1) throw InvalidArgument("super_resolve: input shorter than one mel frame");

  auto z_l = codec::encode(sys.codec, mel_lr);
  auto z_hat = sys.sampler(z_l.values.unsqueeze(0));
  auto mel_hat = codec::decode(sys.codec, codec::LatentGrid{z_hat[0], frames}, sys.mel);

  const long body = frames * sys.mel.hop;
  dsp::Waveform lr_body(std::vector<float>(x.samples.begin(), x.samples.begin() + body),
                        x.sample_rate);
  auto out = vocoder::generate_waveform(sys.vocoder, mel_hat, lr_body);
  out.samples.insert(out.samples.end(), x.samples.begin() + body, x.samples.end());
  return out;
}

eval::SrModel as_sr_model(SrSystem& sys) {
  return [&sys](const dsp::Waveform& lr, double) { return super_resolve(sys, lr); };
}

eval::SrModel identity_model() {
  return [](const dsp::Waveform& lr, double) { return lr; };
}

}  // namespace flashsr::pipeline
