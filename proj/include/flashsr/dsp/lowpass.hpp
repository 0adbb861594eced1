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

#include <random>
#include <utility>
#include <vector>

#include "flashsr/dsp/iir.hpp"
#include "flashsr/dsp/waveform.hpp"

namespace flashsr::dsp {

struct FilterSpec {
  FilterFamily family = FilterFamily::kButterworth;
  int order = 2;
  double cutoff_hz = 4000.0;

  bool operator==(const FilterSpec&) const = default;
};

struct LowpassSimConfig {
  double cutoff_lo_hz = 2000.0;
  double cutoff_hi_hz = 16000.0;
  int order_lo = 2;
  int order_hi = 10;
  std::vector<FilterFamily> families = {FilterFamily::kChebyshev, FilterFamily::kButterworth,
                                        FilterFamily::kBessel, FilterFamily::kElliptic};
  // Downsample to a rate near 2 * cutoff and back after filtering, the way a
  // genuinely low-rate source would look once upsampled.
  bool rate_round_trip = true;

  // Checks ranges; when sample_rate > 0 also checks them against Nyquist.
  void validate(int sample_rate = 0) const;

  // 2-16 kHz at 48 kHz, scaled linearly to the given rate.
  static LowpassSimConfig for_rate(int sample_rate);
};

// Family, order and cutoff drawn uniformly (order and cutoff over integers).
FilterSpec sample_filter(const LowpassSimConfig& cfg, std::mt19937_64& rng);

// Throws InvalidArgument for an out-of-range spec and InternalError (with the
// spec in the message) when the realization is not stable.
Waveform lowpass_apply(const Waveform& w, const FilterSpec& spec);

// Rate used for the round trip: 2 * cutoff rounded up to a multiple of 100 Hz.
int round_trip_rate(double cutoff_hz);

Waveform degrade(const Waveform& w, const FilterSpec& spec, bool rate_round_trip = true);

std::pair<Waveform, FilterSpec> simulate_lr(const Waveform& w, const LowpassSimConfig& cfg,
                                            std::mt19937_64& rng);

std::string describe(const FilterSpec& spec);

}  // namespace flashsr::dsp
