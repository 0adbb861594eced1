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

#include <gtest/gtest.h>

#include <set>

#include "flashsr/error.hpp"
#include "flashsr/pipeline/pipeline.hpp"
#include "oracles.hpp"
#include "scratch.hpp"

namespace flashsr::pipeline {
namespace {

double band_energy_fraction(const dsp::Waveform& w, double f_lo) {
  auto x = dsp::to_tensor(w, torch::kFloat64);
  auto spec = torch::fft::rfft(x).abs().pow(2);
  const long lo = static_cast<long>(f_lo / w.sample_rate * w.size());
  return (spec.narrow(0, lo, spec.size(0) - lo).sum() / spec.sum()).item<double>();
}

TEST(Corpus, SynthIsDeterministicFullBandAndCategorized) {
  const auto a = synth_corpus(6, 0.5, 16000, 3);
  const auto b = synth_corpus(6, 0.5, 16000, 3);
  const auto c = synth_corpus(6, 0.5, 16000, 4);
  std::set<std::string> cats, ids;
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].hr.samples, b[i].hr.samples);
    EXPECT_NE(a[i].hr.samples, c[i].hr.samples);
    EXPECT_EQ(a[i].hr.size(), 8000u);
    float peak = 0.0f;
    for (float v : a[i].hr.samples) peak = std::max(peak, std::abs(v));
    EXPECT_NEAR(peak, 0.5, 1e-6);
    // Content above the top desk cutoff is what the system has to restore.
    EXPECT_GT(band_energy_fraction(a[i].hr, 4000.0), 1e-4) << a[i].category;
    cats.insert(a[i].category);
    ids.insert(a[i].id);
  }
  EXPECT_EQ(cats, (std::set<std::string>{"harmonic", "noise", "sweep"}));
  EXPECT_EQ(ids.size(), 6u);
  // Item i does not depend on how many items were asked for.
  EXPECT_EQ(synth_corpus(2, 0.5, 16000, 3)[1].hr.samples, a[1].hr.samples);
  EXPECT_THROW(synth_corpus(0, 0.5, 16000, 0), InvalidArgument);
}

TEST(Corpus, LoadResamplesAndPads) {
  const auto dir = testing::scratch_dir("corpus");
  std::filesystem::create_directories(dir / "speech");
  const auto src = synth_corpus(2, 0.25, 8000, 1);
  dsp::write_wav(dir / "speech" / "b.wav", src[1].hr);
  dsp::write_wav(dir / "speech" / "a.wav", src[0].hr);
  const auto items = load_corpus(dir, 0.5, 16000);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].id, "a");
  EXPECT_EQ(items[0].category, "speech");
  EXPECT_EQ(items[0].hr.sample_rate, 16000);
  EXPECT_EQ(items[0].hr.size(), 8000u);
  EXPECT_EQ(items[0].hr.samples.back(), 0.0f);
  EXPECT_THROW(load_corpus(dir / "none", 1.0, 16000), InvalidArgument);
  std::filesystem::create_directories(dir / "empty");
  EXPECT_THROW(load_corpus(dir / "empty", 1.0, 16000), InvalidArgument);
}

TEST(Pairs, SimulatedPairsMatchLengthAndSeed) {
  const auto corpus = synth_corpus(4, 0.5, 16000, 0);
  const auto cfg = dsp::LowpassSimConfig::for_rate(16000);
  const auto pairs = simulate_pairs(corpus, cfg, 5);
  const auto again = simulate_pairs(corpus, cfg, 5);
  ASSERT_EQ(pairs.size(), 4u);
  for (size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(pairs[i].lr.size(), pairs[i].hr.size());
    EXPECT_EQ(pairs[i].lr.sample_rate, 16000);
    EXPECT_EQ(pairs[i].lr.samples, again[i].lr.samples);
    EXPECT_GE(pairs[i].filter.cutoff_hz, cfg.cutoff_lo_hz);
    EXPECT_LE(pairs[i].filter.cutoff_hz, cfg.cutoff_hi_hz);
    // The degraded clip has lost energy above its cutoff.
    const double c = pairs[i].filter.cutoff_hz * 1.3;
    if (c < 7500) {
      EXPECT_LT(band_energy_fraction(pairs[i].lr, c), band_energy_fraction(pairs[i].hr, c));
    }
  }
  const auto vp = vocoder_pairs(pairs);
  EXPECT_EQ(vp[2].lr.samples, pairs[2].lr.samples);
  const auto mels = mel_batch({corpus[0].hr, corpus[1].hr}, dsp::MelConfig::desk());
  EXPECT_EQ(mels.size(0), 2);
  EXPECT_EQ(mels.size(1), 64);
  EXPECT_THROW(mel_batch({}, dsp::MelConfig::desk()), InvalidArgument);
}

SrSystem tiny_system() {
  SrSystem sys;
  sys.mel = dsp::MelConfig::desk();
  sys.codec = codec::MelVae(codec::CodecConfig{4, 4, 8});
  denoiser::DenoiserConfig dc;
  dc.latent_channels = 4;
  dc.widths = {8, 8, 16};
  dc.time_dim = 8;
  dc.heads = 2;
  auto student = std::make_shared<denoiser::UNetDenoiser>(dc);
  sys.sampler = student_sampler(student, diffusion::NoiseSchedule{}, 0);
  auto vc = vocoder::VocoderConfig::desk();
  vc.initial_channels = 16;
  sys.vocoder = vocoder::Generator(vc);
  sys.vocoder->eval();
  return sys;
}

TEST(SuperResolve, OutputKeepsDurationAtSystemRate) {
  auto sys = tiny_system();
  const auto clip = synth_corpus(1, 0.531, 16000, 2)[0].hr;
  const auto out = super_resolve(sys, clip);
  EXPECT_EQ(out.sample_rate, 16000);
  EXPECT_EQ(out.size(), clip.size());
  for (float v : out.samples) ASSERT_TRUE(std::isfinite(v));
  // Tail past the last whole frame is the input itself.
  EXPECT_EQ(out.samples.back(), clip.samples.back());

  const auto low = synth_corpus(1, 0.5, 8000, 2)[0].hr;
  const auto up = super_resolve(sys, low);
  EXPECT_EQ(up.sample_rate, 16000);
  EXPECT_EQ(up.size(), 8000u);

  dsp::Waveform tiny(std::vector<float>(50, 0.1f), 16000);
  EXPECT_THROW(super_resolve(sys, tiny), InvalidArgument);
}

TEST(SuperResolve, SeededSamplerIsReproducible) {
  auto sys = tiny_system();
  denoiser::DenoiserConfig dc;
  dc.latent_channels = 4;
  dc.widths = {8, 8, 16};
  dc.time_dim = 8;
  dc.heads = 2;
  auto student = std::make_shared<denoiser::UNetDenoiser>(dc);
  const auto clip = synth_corpus(1, 0.3, 16000, 2)[0].hr;
  sys.sampler = student_sampler(student, diffusion::NoiseSchedule{}, 11);
  const auto first = super_resolve(sys, clip);
  const auto second = super_resolve(sys, clip);
  sys.sampler = student_sampler(student, diffusion::NoiseSchedule{}, 11);
  EXPECT_EQ(super_resolve(sys, clip).samples, first.samples);
  // The generator advances between calls, so the noise differs.
  EXPECT_NE(second.samples, first.samples);
  EXPECT_EQ(identity_model()(clip, 1000).samples, clip.samples);
}

}  // namespace
}  // namespace flashsr::pipeline
