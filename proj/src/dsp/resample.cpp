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

#include "flashsr/dsp/resample.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "flashsr/error.hpp"

namespace flashsr::dsp {

namespace {

constexpr long kMaxPhaseTable = 4096;

class SincKernel {
 public:
  SincKernel(const SincResamplerConfig& cfg, double cutoff)
      : cutoff_(cutoff),
        half_width_(cfg.zero_crossings / cutoff),
        beta_(cfg.kaiser_beta),
        norm_(1.0 / std::cyl_bessel_i(0.0, cfg.kaiser_beta)) {}

  double half_width() const { return half_width_; }

  // Kernel value at offset x (input samples) from the output instant.
  double operator()(double x) const {
    const double r = x / half_width_;
    if (std::abs(r) >= 1.0) return 0.0;
    const double window = std::cyl_bessel_i(0.0, beta_ * std::sqrt(1.0 - r * r)) * norm_;
    const double arg = std::numbers::pi * cutoff_ * x;
    const double sinc = (arg == 0.0) ? 1.0 : std::sin(arg) / arg;
    return cutoff_ * sinc * window;
  }

 private:
  double cutoff_;
  double half_width_;
  double beta_;
  double norm_;
};

}  // namespace

Waveform resample_sinc(const Waveform& w, int target_rate, const SincResamplerConfig& cfg) {
  if (target_rate <= 0) {
    throw InvalidArgument("resample target rate must be positive, got " +
                          std::to_string(target_rate));
  }
  if (w.sample_rate <= 0) throw InvalidArgument("source sample rate must be positive");
  if (target_rate == w.sample_rate) return w;

  const long in_rate = w.sample_rate;
  const long out_rate = target_rate;
  const long n_in = static_cast<long>(w.size());
  const long n_out = std::lround(static_cast<double>(n_in) * out_rate / in_rate);

  const double cutoff = cfg.rolloff * std::min(1.0, static_cast<double>(out_rate) / in_rate);
  const SincKernel kernel(cfg, cutoff);
  const long reach = static_cast<long>(std::ceil(kernel.half_width()));

  // Output m sits at input position m * in / out. Its fractional part cycles
  // through out / gcd(in, out) phases, so kernels are tabulated per phase
  // when that count is small.
  const long g = std::gcd(in_rate, out_rate);
  const long phases = out_rate / g;
  const long step = in_rate / g;
  const long taps = 2 * reach + 1;
  std::vector<double> table;
  if (phases <= kMaxPhaseTable) {
    table.resize(static_cast<std::size_t>(phases * taps));
    for (long p = 0; p < phases; ++p) {
      const double frac = static_cast<double>(p) / phases;
      for (long k = -reach; k <= reach; ++k) {
        table[static_cast<std::size_t>(p * taps + k + reach)] = kernel(frac - k);
      }
    }
  }

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long m = 0; m < n_out; ++m) {
    const long num = m * step;  // position * phases
    const long base = num / phases;
    const long phase = num % phases;
    const double frac = static_cast<double>(phase) / phases;
    double acc = 0.0;
    for (long k = -reach; k <= reach; ++k) {
      const long idx = base + k;
      if (idx < 0 || idx >= n_in) continue;
      const double h = table.empty() ? kernel(frac - k)
                                     : table[static_cast<std::size_t>(phase * taps + k + reach)];
      acc += h * w.samples[static_cast<std::size_t>(idx)];
    }
    out.samples[static_cast<std::size_t>(m)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace flashsr::dsp
