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
#include <functional>
#include <string>
#include <vector>

#include "flashsr/dsp/lowpass.hpp"
#include "flashsr/dsp/waveform.hpp"
#include "json.hpp"

namespace flashsr::eval {

// STFT used by the metrics: 2048 / 512 at 48 kHz, scaled with the rate.
struct SpectralMetricConfig {
  int window = 2048;
  int hop = 512;
  double power_floor = 1e-10;

  void validate() const;
  static SpectralMetricConfig for_rate(int sample_rate);
};

// Mean over frames of sqrt(mean over bins of (log10 P_ref - log10 P_est)^2),
// P = max(|STFT|^2, floor). Bins may be restricted to [f_lo, f_hi] Hz.
// Throws InvalidArgument on a length or rate mismatch.
double lsd(const dsp::Waveform& ref, const dsp::Waveform& est, const SpectralMetricConfig& cfg);
double lsd(const dsp::Waveform& ref, const dsp::Waveform& est);
double lsd_band(const dsp::Waveform& ref, const dsp::Waveform& est, const SpectralMetricConfig& cfg,
                double f_lo_hz, double f_hi_hz);

// Mean |(|STFT_ref| - |STFT_est|)|.
double stft_distance(const dsp::Waveform& ref, const dsp::Waveform& est,
                     const SpectralMetricConfig& cfg);
double stft_distance(const dsp::Waveform& ref, const dsp::Waveform& est);

struct RtfResult {
  int nfe = 0;
  double wall_seconds = 0.0;   // median over the timed repeats
  double audio_seconds = 0.0;
  double rtf = 0.0;            // wall / audio
  std::vector<double> samples;
};

// Runs `runner` warmup times untimed, then `repeats` times timed.
RtfResult rtf_measure(const std::function<void()>& runner, double audio_seconds, int repeats,
                      int warmup = 1, int nfe = 0);

struct EvalItem {
  std::string id;
  std::string category;
  dsp::Waveform hr;
};

struct MetricRow {
  std::string item_id;
  std::string category;
  double cutoff_hz = 0.0;
  double lsd = 0.0;
  double stft_d = 0.0;
};

struct CutoffAggregate {
  double cutoff_hz = 0.0;
  double lsd = 0.0;
  double stft_d = 0.0;
  int count = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<CutoffAggregate> aggregates;  // one per cutoff, in input order
  std::vector<RtfResult> rtf;

  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;
  void write_json(const std::filesystem::path& path) const;
};

// lr at the target rate -> estimate at the target rate, same length.
using SrModel = std::function<dsp::Waveform(const dsp::Waveform& lr, double cutoff_hz)>;

struct EvalConfig {
  uint64_t seed = 0;
  dsp::LowpassSimConfig lowpass;  // families and orders; cutoffs come from the suite
  SpectralMetricConfig metric;
};

// Desk cutoffs 4 / 8 / 12 kHz scaled from 48 kHz to the given rate.
std::vector<double> scaled_cutoffs(int sample_rate);

// For every item and cutoff: degrade with a filter whose family and order are
// drawn from a generator seeded by (seed, item index), run the model, score.
MetricReport eval_suite(const SrModel& model, const std::vector<EvalItem>& dataset,
                        const std::vector<double>& cutoffs, const EvalConfig& cfg);

// The filter eval_suite uses for item `index` at `cutoff_hz`.
dsp::FilterSpec eval_filter(const EvalConfig& cfg, size_t index, double cutoff_hz);

}  // namespace flashsr::eval
