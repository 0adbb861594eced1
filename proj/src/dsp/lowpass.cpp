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

#include "flashsr/dsp/lowpass.hpp"

#include <cmath>
#include <sstream>

#include "flashsr/dsp/resample.hpp"
#include "flashsr/error.hpp"

namespace flashsr::dsp {

void LowpassSimConfig::validate(int sample_rate) const {
  if (families.empty()) throw InvalidArgument("lowpass simulation needs at least one family");
  if (!(cutoff_lo_hz > 0.0) || cutoff_hi_hz < cutoff_lo_hz) {
    throw InvalidArgument("invalid cutoff range");
  }
  if (order_lo < 2 || order_hi > 10 || order_hi < order_lo) {
    throw InvalidArgument("filter order range must lie within [2, 10]");
  }
  if (sample_rate > 0 && !(cutoff_hi_hz < sample_rate / 2.0)) {
    throw InvalidArgument("cutoff range exceeds Nyquist of " + std::to_string(sample_rate) + " Hz");
  }
}

LowpassSimConfig LowpassSimConfig::for_rate(int sample_rate) {
  LowpassSimConfig cfg;
  const double scale = sample_rate / 48000.0;
  cfg.cutoff_lo_hz = std::round(2000.0 * scale);
  cfg.cutoff_hi_hz = std::round(16000.0 * scale);
  return cfg;
}

FilterSpec sample_filter(const LowpassSimConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_int_distribution<std::size_t> pick_family(0, cfg.families.size() - 1);
  std::uniform_int_distribution<int> pick_order(cfg.order_lo, cfg.order_hi);
  std::uniform_int_distribution<long> pick_cutoff(std::lround(std::ceil(cfg.cutoff_lo_hz)),
                                                  std::lround(std::floor(cfg.cutoff_hi_hz)));
  FilterSpec spec;
  spec.family = cfg.families[pick_family(rng)];
  spec.order = pick_order(rng);
  spec.cutoff_hz = static_cast<double>(pick_cutoff(rng));
  return spec;
}

std::string describe(const FilterSpec& spec) {
  std::ostringstream os;
  os << to_string(spec.family) << "(order=" << spec.order << ", cutoff=" << spec.cutoff_hz
     << " Hz)";
  return os.str();
}

Waveform lowpass_apply(const Waveform& w, const FilterSpec& spec) {
  if (spec.order < 2 || spec.order > 10) {
    throw InvalidArgument("filter order must be in [2, 10]: " + describe(spec));
  }
  const SosFilter filter = design_lowpass(spec.family, spec.order, spec.cutoff_hz, w.sample_rate);
  if (!(filter.max_pole_radius() < 1.0)) {
    throw InternalError("unstable filter realization for " + describe(spec));
  }
  std::vector<double> x(w.samples.begin(), w.samples.end());
  const std::vector<double> y = filter.apply(x);
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(y.begin(), y.end());
  return out;
}

int round_trip_rate(double cutoff_hz) {
  return static_cast<int>(std::ceil(2.0 * cutoff_hz / 100.0)) * 100;
}

Waveform degrade(const Waveform& w, const FilterSpec& spec, bool rate_round_trip) {
  Waveform filtered = lowpass_apply(w, spec);
  const int low_rate = round_trip_rate(spec.cutoff_hz);
  if (!rate_round_trip || low_rate >= w.sample_rate) return filtered;

  Waveform restored = resample_sinc(resample_sinc(filtered, low_rate), w.sample_rate);
  restored.samples.resize(w.size(), 0.0f);
  return restored;
}

std::pair<Waveform, FilterSpec> simulate_lr(const Waveform& w, const LowpassSimConfig& cfg,
                                            std::mt19937_64& rng) {
  cfg.validate(w.sample_rate);
  const FilterSpec spec = sample_filter(cfg, rng);
  return {degrade(w, spec, cfg.rate_round_trip), spec};
}

}  // namespace flashsr::dsp
