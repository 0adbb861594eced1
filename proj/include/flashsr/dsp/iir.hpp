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

#include <complex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flashsr::dsp {

enum class FilterFamily { kChebyshev, kButterworth, kBessel, kElliptic };

std::string_view to_string(FilterFamily family);
FilterFamily parse_filter_family(std::string_view name);

// Ripple parameters for the families that have them.
inline constexpr double kChebyshevRippleDb = 1.0;
inline constexpr double kEllipticRippleDb = 1.0;
inline constexpr double kEllipticStopbandDb = 60.0;

// Analog prototype in zero/pole/gain form, normalized to a 1 rad/s edge.
struct AnalogPrototype {
  std::vector<std::complex<double>> zeros;
  std::vector<std::complex<double>> poles;
  double dc_gain = 1.0;  // |H(0)| of the prototype
};

AnalogPrototype analog_lowpass_prototype(FilterFamily family, int order);

// One direct-form-II-transposed section; a0 is normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct SosFilter {
  std::vector<Biquad> sections;

  std::complex<double> response(double freq_hz, double sample_rate) const;
  // Largest pole radius over all sections; < 1 means stable.
  double max_pole_radius() const;
  std::vector<double> apply(std::span<const double> input) const;
};

// Digital lowpass via bilinear transform with the edge pre-warped onto
// cutoff_hz. Throws InvalidArgument for an order outside [1, 12] or a cutoff
// outside (0, sample_rate / 2).
SosFilter design_lowpass(FilterFamily family, int order, double cutoff_hz, double sample_rate);

}  // namespace flashsr::dsp
