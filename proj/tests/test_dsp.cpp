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

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "flashsr/dsp/iir.hpp"
#include "flashsr/dsp/lfr.hpp"
#include "flashsr/dsp/lowpass.hpp"
#include "flashsr/dsp/resample.hpp"
#include "flashsr/dsp/spectral.hpp"
#include "flashsr/dsp/waveform.hpp"
#include "flashsr/error.hpp"
#include "flashsr/eval/metrics.hpp"
#include "oracles.hpp"

namespace flashsr::dsp {
namespace {

const std::array<FilterFamily, 4> kFamilies = {FilterFamily::kChebyshev, FilterFamily::kButterworth,
                                               FilterFamily::kBessel, FilterFamily::kElliptic};

Waveform sine(double freq, double seconds, int rate, double amp = 0.5) {
  std::vector<float> s(std::lround(seconds * rate));
  for (size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * i / rate));
  }
  return {std::move(s), rate};
}

Waveform noise(long n, int rate, uint64_t seed, double sd = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  std::vector<float> s(n);
  for (auto& v : s) v = static_cast<float>(g(rng));
  return {std::move(s), rate};
}

// |H(f)| from scipy.signal (butter / cheby1 rp=1 / bessel norm='mag' /
// ellip rp=1 rs=60, output='sos', sosfreqz) at fs = 16 kHz, fc = 3 kHz.
struct ScipyRow {
  FilterFamily family;
  int order;
  std::array<double, 6> mag;  // at 500, 2000, 3000, 4000, 5000, 7000 Hz
};
const std::array<double, 6> kOracleFreqs = {500.0, 2000.0, 3000.0, 4000.0, 5000.0, 7000.0};
const ScipyRow kScipy[] = {
    {FilterFamily::kChebyshev, 3, {9.769514394447e-01, 9.079948442053e-01, 8.912509381337e-01, 2.151858235413e-01, 5.134037895631e-02, 1.168981780655e-03}},
    {FilterFamily::kButterworth, 3, {9.999948713732e-01, 9.727768210540e-01, 7.071067811865e-01, 2.858677937055e-01, 8.864261210095e-02, 2.347804454756e-03}},
    {FilterFamily::kBessel, 3, {9.933099864969e-01, 8.832928245828e-01, 7.071067811865e-01, 4.421805076985e-01, 1.927914962803e-01, 6.393870919514e-03}},
    {FilterFamily::kElliptic, 3, {9.773615461062e-01, 9.069185600209e-01, 8.912509381337e-01, 2.048190530442e-01, 4.435885171073e-02, 8.218643086743e-04}},
    {FilterFamily::kChebyshev, 8, {9.820318518476e-01, 9.571586828636e-01, 8.912509381337e-01, 1.824773395070e-03, 3.734331907028e-05, 1.549115420805e-09}},
    {FilterFamily::kButterworth, 8, {1.000000000000e+00, 9.997622487842e-01, 7.071067811865e-01, 3.970070045220e-02, 1.578631806056e-03, 9.737220051665e-08}},
    {FilterFamily::kBessel, 8, {9.927004687357e-01, 8.773585328814e-01, 7.071067811865e-01, 4.443763021409e-01, 1.270148297394e-01, 1.827045364177e-05}},
    {FilterFamily::kElliptic, 8, {9.433097833758e-01, 9.357344407486e-01, 8.912509381337e-01, 2.706673516265e-04, 9.728133763440e-04, 6.946597679168e-04}},
};

TEST(FilterDesign, MatchesScipyMagnitudeResponse) {
  for (const auto& row : kScipy) {
    const auto f = design_lowpass(row.family, row.order, 3000.0, 16000.0);
    for (size_t i = 0; i < kOracleFreqs.size(); ++i) {
      EXPECT_NEAR(std::abs(f.response(kOracleFreqs[i], 16000.0)), row.mag[i], 1e-6)
          << to_string(row.family) << " order " << row.order << " at " << kOracleFreqs[i];
    }
  }
}

TEST(FilterDesign, StableAcrossFamiliesOrdersAndCutoffs) {
  for (auto fam : kFamilies) {
    for (int order = 2; order <= 10; ++order) {
      for (double frac : {0.01, 0.05, 0.125, 0.25, 0.4, 0.49}) {
        const auto f = design_lowpass(fam, order, frac * 48000.0, 48000.0);
        EXPECT_LT(f.max_pole_radius(), 1.0) << to_string(fam) << " " << order << " " << frac;
      }
    }
  }
}

TEST(FilterDesign, NeverAmplifiesBeyondPassbandPeak) {
  // Chebyshev and elliptic ripple between -1 dB and 0 dB; the others are
  // monotone, so |H| <= 1 everywhere.
  for (auto fam : kFamilies) {
    for (int order = 2; order <= 10; ++order) {
      const auto f = design_lowpass(fam, order, 4000.0, 16000.0);
      double peak = 0.0;
      for (int i = 0; i <= 4000; ++i) peak = std::max(peak, std::abs(f.response(i * 2.0, 16000.0)));
      EXPECT_LE(peak, 1.0 + 1e-9) << to_string(fam) << " order " << order;
    }
  }
}

TEST(FilterDesign, RejectsBadArguments) {
  EXPECT_THROW(design_lowpass(FilterFamily::kButterworth, 0, 1000.0, 16000.0), InvalidArgument);
  EXPECT_THROW(design_lowpass(FilterFamily::kButterworth, 4, 8000.0, 16000.0), InvalidArgument);
  EXPECT_THROW(design_lowpass(FilterFamily::kButterworth, 4, -1.0, 16000.0), InvalidArgument);
  EXPECT_THROW(parse_filter_family("chebyshev2"), InvalidArgument);
  EXPECT_EQ(parse_filter_family("elliptic"), FilterFamily::kElliptic);
}

TEST(Lowpass, EllipticOrderTenStopbandAttenuation) {
  // Impulse response FFT: mean energy above 1.5 fc vs passband mean energy.
  const double fs = 48000.0, fc = 4000.0;
  const auto f = design_lowpass(FilterFamily::kElliptic, 10, fc, fs);
  std::vector<double> impulse(1 << 15, 0.0);
  impulse[0] = 1.0;
  const auto h = f.apply(impulse);
  auto spec = torch::fft::rfft(torch::tensor(h, torch::kFloat64)).abs().pow(2);
  const long bins = spec.size(0);
  const double df = fs / static_cast<double>(h.size());
  const long pass_end = static_cast<long>(fc / df);
  const long stop_begin = static_cast<long>(std::ceil(1.5 * fc / df));
  const double pass = spec.narrow(0, 1, pass_end - 1).mean().item<double>();
  const double stop = spec.narrow(0, stop_begin, bins - stop_begin).mean().item<double>();
  EXPECT_GE(10.0 * std::log10(pass / stop), 40.0);
}

TEST(Lowpass, ButterworthPassesDc) {
  for (int order = 2; order <= 10; ++order) {
    Waveform dc(std::vector<float>(16000, 0.25f), 16000);
    const auto out = lowpass_apply(dc, {FilterFamily::kButterworth, order, 2000.0});
    ASSERT_EQ(out.size(), dc.size());
    EXPECT_NEAR(out.samples.back(), 0.25f, 1e-4) << "order " << order;
  }
}

TEST(Lowpass, NearNyquistCutoffKeepsBroadbandEnergy) {
  for (auto fam : kFamilies) {
    const auto f = design_lowpass(fam, 2, 0.499 * 16000.0, 16000.0);
    std::vector<double> impulse(1 << 14, 0.0);
    impulse[0] = 1.0;
    double energy = 0.0;
    for (double v : f.apply(impulse)) energy += v * v;
    const double db = 10.0 * std::log10(energy);
    EXPECT_LE(std::abs(db), 3.0) << to_string(fam);
  }
}

TEST(Lowpass, EnergyNeverExceedsInput) {
  const auto x = noise(16000, 16000, 7);
  double e_in = 0.0;
  for (float v : x.samples) e_in += v * v;
  std::mt19937_64 rng(3);
  const auto cfg = LowpassSimConfig::for_rate(16000);
  for (int i = 0; i < 40; ++i) {
    const auto spec = sample_filter(cfg, rng);
    const auto y = lowpass_apply(x, spec);
    double e_out = 0.0;
    for (float v : y.samples) e_out += v * v;
    EXPECT_LE(e_out, e_in * (1.0 + 1e-6)) << describe(spec);
  }
}

TEST(Lowpass, SampleFilterFamilyFrequencies) {
  const auto cfg = LowpassSimConfig::for_rate(48000);
  std::mt19937_64 rng(11);
  std::array<int, 4> counts{};
  for (int i = 0; i < 10000; ++i) {
    const auto s = sample_filter(cfg, rng);
    counts[static_cast<int>(s.family)]++;
    ASSERT_GE(s.cutoff_hz, 2000.0);
    ASSERT_LE(s.cutoff_hz, 16000.0);
    ASSERT_GE(s.order, 2);
    ASSERT_LE(s.order, 10);
  }
  for (int c : counts) EXPECT_NEAR(c / 10000.0, 0.25, 0.02);
}

TEST(Lowpass, DegenerateOrderRangeAndEmptyFamilies) {
  auto cfg = LowpassSimConfig::for_rate(16000);
  cfg.order_lo = cfg.order_hi = 2;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_filter(cfg, rng).order, 2);
  cfg.families.clear();
  EXPECT_THROW(sample_filter(cfg, rng), InvalidArgument);
}

TEST(Lowpass, SimulateLrIsDeterministicAndLossy) {
  const auto x = noise(16000, 16000, 5);
  const auto cfg = LowpassSimConfig::for_rate(16000);
  std::mt19937_64 a(42), b(42);
  const auto [ya, sa] = simulate_lr(x, cfg, a);
  const auto [yb, sb] = simulate_lr(x, cfg, b);
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(ya.samples, yb.samples);
  EXPECT_EQ(ya.size(), x.size());
  EXPECT_GT(eval::lsd(x, ya), 0.0);
}

TEST(Lowpass, UnstableOrOutOfRangeSpecIsReported) {
  const auto x = noise(100, 16000, 1);
  EXPECT_THROW(lowpass_apply(x, {FilterFamily::kBessel, 4, 9000.0}), InvalidArgument);
  EXPECT_THROW(lowpass_apply(x, {FilterFamily::kBessel, 40, 1000.0}), InvalidArgument);
}

TEST(Resample, LengthArithmetic) {
  const auto x = noise(4000, 4000, 2);
  EXPECT_EQ(resample_sinc(x, 48000).size(), 48000u);
  EXPECT_EQ(resample_sinc(noise(16001, 16000, 2), 48000).size(), 48003u);
  EXPECT_THROW(resample_sinc(x, 0), InvalidArgument);
}

TEST(Resample, SameRateIsIdentity) {
  const auto x = noise(4800, 48000, 3);
  const auto y = resample_sinc(x, 48000);
  ASSERT_EQ(y.size(), x.size());
  for (size_t i = 0; i < x.size(); ++i) ASSERT_LT(std::abs(y.samples[i] - x.samples[i]), 1e-6);
}

TEST(Resample, SinePeakSurvivesUpsampling) {
  const auto y = resample_sinc(sine(440.0, 1.0, 8000), 48000);
  auto mag = torch::fft::rfft(dsp::to_tensor(y, torch::kFloat64)).abs();
  const double df = 48000.0 / y.size();
  const double peak_hz = mag.argmax().item<long>() * df;
  EXPECT_LE(std::abs(peak_hz - 440.0), df);
}

TEST(Resample, RoundTripPreservesTonePower) {
  for (int rate : {8000, 22050, 24000}) {
    const auto x = sine(1000.0, 1.0, 48000);
    const auto y = resample_sinc(resample_sinc(x, rate), 48000);
    ASSERT_EQ(y.size(), x.size());
    double ex = 0.0, ey = 0.0;
    // Skip the kernel's edge transients.
    for (size_t i = 2000; i + 2000 < x.size(); ++i) {
      ex += x.samples[i] * x.samples[i];
      ey += y.samples[i] * y.samples[i];
    }
    EXPECT_NEAR(ey / ex, 1.0, 0.01) << rate;
  }
}

TEST(Spectral, StftMatchesNaiveDft) {
  const auto x = noise(1000, 16000, 9);
  std::vector<double> xd(x.samples.begin(), x.samples.end());
  MelConfig cfg{256, 64, 16, 16000, 1e-5};
  const auto got = stft_mag(x, cfg);
  const auto want = testing::naive_stft_mag(xd, 256, 64);
  ASSERT_EQ(got.size(1), static_cast<long>(want.size()));
  auto acc = got.accessor<double, 2>();
  for (size_t t = 0; t < want.size(); ++t) {
    for (size_t k = 0; k < want[t].size(); ++k) ASSERT_NEAR(acc[k][t], want[t][k], 1e-9);
  }
}

TEST(Spectral, SilenceAndImpulse) {
  const auto cfg = MelConfig::desk();
  Waveform silence(std::vector<float>(16000, 0.0f), 16000);
  EXPECT_EQ(stft_mag(silence, cfg).abs().max().item<double>(), 0.0);
  const auto mel = mel_spectrogram(silence, cfg);
  EXPECT_TRUE(torch::allclose(mel.values, torch::full_like(mel.values, std::log(1e-5f))));

  Waveform impulse(std::vector<float>(16000, 0.0f), 16000);
  impulse.samples[8000] = 1.0f;
  const auto mag = stft_mag(impulse, cfg);
  for (long t = 0; t < mag.size(1); ++t) {
    auto col = mag.select(1, t);
    const double hi = col.max().item<double>();
    if (hi < 1e-3) continue;
    EXPECT_LT((hi - col.min().item<double>()) / hi, 1e-6) << "frame " << t;
  }
}

TEST(Spectral, FrameCountsAndFullScaleShape) {
  const auto desk = MelConfig::desk();
  for (long n : {160L, 161L, 999L, 16000L, 16159L}) {
    Waveform w(std::vector<float>(n, 0.1f), 16000);
    EXPECT_EQ(mel_spectrogram(w, desk).frames(), n / 160);
  }
  const auto paper = MelConfig::paper();
  Waveform w = noise(245760, 48000, 4);
  const auto mel = mel_spectrogram(w, paper);
  EXPECT_EQ(mel.n_mels(), 256);
  EXPECT_EQ(mel.frames(), 512);
  EXPECT_EQ(stft_mag(w, paper).size(1), 512);
}

TEST(Spectral, LogLinearityAndRateCheck) {
  const auto cfg = MelConfig::desk();
  const auto x = noise(16000, 16000, 6);
  Waveform x2 = x;
  for (auto& v : x2.samples) v *= 2.0f;
  const auto a = mel_spectrogram(x, cfg).values;
  const auto b = mel_spectrogram(x2, cfg).values;
  auto above = a > std::log(1e-5) + 1.0;
  auto diff = (b - a).masked_select(above);
  ASSERT_GT(diff.numel(), 0);
  EXPECT_LT((diff - std::log(2.0)).abs().max().item<double>(), 1e-4);
  EXPECT_THROW(mel_spectrogram(noise(100, 8000, 1), cfg), InvalidArgument);
}

TEST(Spectral, FilterbankRowsHaveUnitArea) {
  for (auto [mels, fft, rate] : {std::tuple{64, 640, 16000}, std::tuple{256, 2048, 48000},
                                 std::tuple{64, 256, 16000}}) {
    auto fb = mel_filterbank(mels, fft, rate);
    EXPECT_LT((fb.sum(1) - 1.0).abs().max().item<double>(), 1e-12);
    EXPECT_GE(fb.min().item<double>(), 0.0);
  }
}

MelSpectrogram random_mel(const MelConfig& cfg, long frames, uint64_t seed) {
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(seed);
  return {torch::randn({cfg.n_mels, frames}, gen) - 3.0, cfg};
}

TEST(Lfr, LowRowsAreCopiedBitExactly) {
  const auto cfg = MelConfig::desk();
  const auto gen = random_mel(cfg, 50, 1);
  const auto inp = random_mel(cfg, 50, 2);
  auto gen_stft = torch::rand({cfg.n_bins(), 50}, torch::kFloat64);
  auto in_stft = torch::rand({cfg.n_bins(), 50}, torch::kFloat64);
  const double cutoff = 3000.0;
  const auto r = lfr_postprocess(gen, gen_stft, inp, in_stft, cutoff);
  const auto centers = mel_center_frequencies(cfg);
  for (int m = 0; m < cfg.n_mels; ++m) {
    if (centers[m] < cutoff) EXPECT_TRUE(torch::equal(r.mel.values[m], inp.values[m])) << m;
  }
  const long bin_split = static_cast<long>(std::ceil(cutoff * cfg.window_size / cfg.sample_rate));
  EXPECT_TRUE(torch::equal(r.stft.narrow(0, 0, bin_split), in_stft.narrow(0, 0, bin_split)));
}

TEST(Lfr, IdenticalInputsGiveUnitScale) {
  const auto cfg = MelConfig::desk();
  const auto m = random_mel(cfg, 20, 3);
  auto s = torch::rand({cfg.n_bins(), 20}, torch::kFloat64);
  const auto r = lfr_postprocess(m, s, m, s, 2500.0);
  EXPECT_DOUBLE_EQ(r.scale, 1.0);
  EXPECT_TRUE(torch::equal(r.mel.values, m.values));
  EXPECT_TRUE(torch::equal(r.stft, s));
}

TEST(Lfr, FourTimesEnergyScalesByOneQuarter) {
  const auto cfg = MelConfig::desk();
  const auto inp = random_mel(cfg, 30, 4);
  MelSpectrogram gen{inp.values + std::log(4.0), cfg};
  auto in_stft = torch::rand({cfg.n_bins(), 30}, torch::kFloat64);
  auto gen_stft = in_stft * 4.0;
  const auto r = lfr_postprocess(gen, gen_stft, inp, in_stft, 4000.0);
  EXPECT_NEAR(r.scale, 0.25, 1e-6);
  EXPECT_LT((r.mel.values - inp.values).abs().max().item<double>(), 1e-5);
  EXPECT_LT((r.stft - in_stft).abs().max().item<double>(), 1e-6);
  EXPECT_FALSE(r.zero_energy_warning);
}

TEST(Lfr, ZeroEnergyFallsBackToUnitScale) {
  const auto cfg = MelConfig::desk();
  MelSpectrogram inp{torch::full({cfg.n_mels, 10}, -1e30, torch::kFloat64), cfg};
  const auto gen = random_mel(cfg, 10, 5);
  auto s = torch::rand({cfg.n_bins(), 10}, torch::kFloat64);
  const auto r = lfr_postprocess(gen, s, inp, s, 4000.0);
  EXPECT_TRUE(r.zero_energy_warning);
  EXPECT_DOUBLE_EQ(r.scale, 1.0);
}

TEST(Waveform, WavRoundTrips) {
  const auto dir = std::filesystem::temp_directory_path() / "flashsr_wav_test";
  std::filesystem::create_directories(dir);
  const auto x = noise(1234, 22050, 8, 0.2);
  write_wav(dir / "f.wav", x, WavEncoding::kFloat32);
  const auto f = read_wav(dir / "f.wav");
  EXPECT_EQ(f.sample_rate, 22050);
  EXPECT_EQ(f.samples, x.samples);
  write_wav(dir / "p.wav", x, WavEncoding::kPcm16);
  const auto p = read_wav(dir / "p.wav");
  ASSERT_EQ(p.size(), x.size());
  for (size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(p.samples[i], x.samples[i], 1.0 / 32767.0);
}

TEST(Waveform, StereoIsDownmixedByAveraging) {
  const auto path = std::filesystem::temp_directory_path() / "flashsr_stereo.wav";
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const int16_t frames[2][2] = {{1000, 3000}, {-2000, 0}};
  out.write("RIFF", 4);
  u32(36 + 8);
  out.write("WAVEfmt ", 8);
  u32(16);
  u16(1);
  u16(2);
  u32(8000);
  u32(8000 * 4);
  u16(4);
  u16(16);
  out.write("data", 4);
  u32(8);
  out.write(reinterpret_cast<const char*>(frames), sizeof(frames));
  out.close();
  const auto w = read_wav(path);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_NEAR(w.samples[0], 2000.0 / 32768.0, 1e-6);
  EXPECT_NEAR(w.samples[1], -1000.0 / 32768.0, 1e-6);
}

TEST(Waveform, ValidateRejectsBadBuffers) {
  EXPECT_THROW(Waveform({}, 16000).validate(), InvalidArgument);
  EXPECT_THROW(Waveform({0.1f}, 0).validate(), InvalidArgument);
  EXPECT_THROW(Waveform({std::nanf("")}, 16000).validate(), InvalidArgument);
  EXPECT_DOUBLE_EQ(Waveform(std::vector<float>(8000), 16000).duration_seconds(), 0.5);
}

}  // namespace
}  // namespace flashsr::dsp
