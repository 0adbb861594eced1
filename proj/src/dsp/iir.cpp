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

#include "flashsr/dsp/iir.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <unsupported/Eigen/Polynomials>

#include "flashsr/error.hpp"

namespace flashsr::dsp {

using cplx = std::complex<double>;
using std::numbers::pi;

std::string_view to_string(FilterFamily family) {
  switch (family) {
    case FilterFamily::kChebyshev: return "chebyshev";
    case FilterFamily::kButterworth: return "butterworth";
    case FilterFamily::kBessel: return "bessel";
    case FilterFamily::kElliptic: return "elliptic";
  }
  return "unknown";
}

FilterFamily parse_filter_family(std::string_view name) {
  for (auto f : {FilterFamily::kChebyshev, FilterFamily::kButterworth, FilterFamily::kBessel,
                 FilterFamily::kElliptic}) {
    if (to_string(f) == name) return f;
  }
  throw InvalidArgument("unknown filter family '" + std::string(name) + "'");
}

namespace {

// Jacobi elliptic machinery via Landen transformations, after Orfanidis,
// "Lecture Notes on Elliptic Filter Design".
constexpr int kLandenSteps = 12;

std::vector<double> landen(double k) {
  std::vector<double> v;
  v.reserve(kLandenSteps);
  for (int n = 0; n < kLandenSteps; ++n) {
    if (k == 0.0 || k == 1.0) {
      v.push_back(k);
      continue;
    }
    const double kp = std::sqrt(1.0 - k * k);
    k = std::pow(k / (1.0 + kp), 2);
    v.push_back(k);
  }
  return v;
}

double ellipk(double k) {
  double prod = 1.0;
  for (double v : landen(k)) prod *= 1.0 + v;
  return prod * pi / 2.0;
}

// cd(u K, k) and sn(u K, k) for complex u.
cplx cde(cplx u, double k) {
  const auto v = landen(k);
  cplx w = std::cos(u * pi / 2.0);
  for (auto it = v.rbegin(); it != v.rend(); ++it) w = (1.0 + *it) * w / (1.0 + *it * w * w);
  return w;
}

cplx sne(cplx u, double k) {
  const auto v = landen(k);
  cplx w = std::sin(u * pi / 2.0);
  for (auto it = v.rbegin(); it != v.rend(); ++it) w = (1.0 + *it) * w / (1.0 + *it * w * w);
  return w;
}

double srem(double x, double y) {
  double z = std::remainder(x, y);
  return z;
}

// Inverse of cde: u such that cd(u K, k) = w.
cplx acde(cplx w, double k) {
  const auto v = landen(k);
  double prev = k;
  for (double vn : v) {
    w = w / (1.0 + std::sqrt(1.0 - w * w * prev * prev)) * 2.0 / (1.0 + vn);
    prev = vn;
  }
  cplx u = 2.0 * std::acos(w) / pi;
  const double big_k = ellipk(k);
  const double big_kp = ellipk(std::sqrt(1.0 - k * k));
  const double r = big_kp / big_k;
  return {srem(u.real(), 4.0), srem(u.imag(), 2.0 * r)};
}

cplx asne(cplx w, double k) { return 1.0 - acde(w, k); }

// Solves the degree equation N K'/K = K1'/K1 for the selectivity k.
double ellipdeg(int order, double k1) {
  const double big_k1 = ellipk(k1);
  const double big_k1p = ellipk(std::sqrt(1.0 - k1 * k1));
  const double q1 = std::exp(-pi * big_k1p / big_k1);
  const double q = std::pow(q1, 1.0 / order);
  double num = 0.0, den = 0.0;
  for (int m = 1; m <= 7; ++m) {
    num += std::pow(q, m * (m + 1));
    den += std::pow(q, m * m);
  }
  return 4.0 * std::sqrt(q) * std::pow((1.0 + num) / (1.0 + 2.0 * den), 2);
}

AnalogPrototype butterworth(int n) {
  AnalogPrototype proto;
  for (int k = 1; k <= n; ++k) {
    proto.poles.push_back(std::polar(1.0, pi * (2.0 * k + n - 1.0) / (2.0 * n)));
  }
  return proto;
}

AnalogPrototype chebyshev(int n) {
  AnalogPrototype proto;
  const double eps = std::sqrt(std::pow(10.0, kChebyshevRippleDb / 10.0) - 1.0);
  const double mu = std::asinh(1.0 / eps) / n;
  for (int k = 1; k <= n; ++k) {
    const double theta = pi * (2.0 * k - 1.0) / (2.0 * n);
    proto.poles.emplace_back(-std::sinh(mu) * std::sin(theta), std::cosh(mu) * std::cos(theta));
  }
  proto.dc_gain = (n % 2 == 0) ? 1.0 / std::sqrt(1.0 + eps * eps) : 1.0;
  return proto;
}

// Magnitude-normalized Bessel: |H(j)| = 1/sqrt(2).
AnalogPrototype bessel(int n) {
  // Reverse Bessel polynomial coefficients a_k = (2n-k)! / (2^(n-k) k! (n-k)!).
  Eigen::VectorXd coeffs(n + 1);
  for (int k = 0; k <= n; ++k) {
    coeffs[k] = std::exp(std::lgamma(2.0 * n - k + 1) - (n - k) * std::log(2.0) -
                         std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
  }
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver;
  solver.compute(coeffs);
  std::vector<cplx> poles(solver.roots().begin(), solver.roots().end());

  const double a0 = coeffs[0];
  auto magnitude = [&](double w) {
    cplx h = a0;
    for (const auto& p : poles) h /= cplx(0.0, w) - p;
    return std::abs(h);
  };
  double lo = 1e-3, hi = 1e3;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    (magnitude(mid) > std::sqrt(0.5) ? lo : hi) = mid;
  }
  const double w3db = std::sqrt(lo * hi);

  AnalogPrototype proto;
  for (auto p : poles) proto.poles.push_back(p / w3db);
  return proto;
}

AnalogPrototype elliptic(int n) {
  const double ep = std::sqrt(std::pow(10.0, kEllipticRippleDb / 10.0) - 1.0);
  const double es = std::sqrt(std::pow(10.0, kEllipticStopbandDb / 10.0) - 1.0);
  const double k1 = ep / es;
  const double k = ellipdeg(n, k1);
  const cplx j(0.0, 1.0);

  AnalogPrototype proto;
  const cplx v0 = -j * asne(j / ep, k1) / static_cast<double>(n);
  for (int i = 1; i <= n / 2; ++i) {
    const double ui = (2.0 * i - 1.0) / n;
    const cplx zeta = cde(ui, k);
    const cplx zero = j / (k * zeta);
    proto.zeros.push_back(zero);
    proto.zeros.push_back(std::conj(zero));
    const cplx pole = j * cde(ui - j * v0, k);
    proto.poles.push_back(pole);
    proto.poles.push_back(std::conj(pole));
  }
  if (n % 2 == 1) proto.poles.emplace_back((j * sne(j * v0, k)).real(), 0.0);
  proto.dc_gain = (n % 2 == 0) ? 1.0 / std::sqrt(1.0 + ep * ep) : 1.0;
  return proto;
}

// Groups roots into conjugate pairs (positive imaginary part kept) and reals.
void split_roots(const std::vector<cplx>& roots, std::vector<cplx>& pairs,
                 std::vector<double>& reals) {
  for (const auto& r : roots) {
    const double tol = 1e-9 * std::max(1.0, std::abs(r));
    if (std::abs(r.imag()) <= tol) {
      reals.push_back(r.real());
    } else if (r.imag() > 0) {
      pairs.push_back(r);
    }
  }
}

}  // namespace

AnalogPrototype analog_lowpass_prototype(FilterFamily family, int order) {
  if (order < 1 || order > 12) {
    throw InvalidArgument("filter order must be in [1, 12], got " + std::to_string(order));
  }
  switch (family) {
    case FilterFamily::kButterworth: return butterworth(order);
    case FilterFamily::kChebyshev: return chebyshev(order);
    case FilterFamily::kBessel: return bessel(order);
    case FilterFamily::kElliptic: return elliptic(order);
  }
  throw InvalidArgument("unknown filter family");
}

SosFilter design_lowpass(FilterFamily family, int order, double cutoff_hz, double sample_rate) {
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate / 2.0)) {
    throw InvalidArgument("cutoff " + std::to_string(cutoff_hz) + " Hz outside (0, " +
                          std::to_string(sample_rate / 2.0) + ")");
  }
  const AnalogPrototype proto = analog_lowpass_prototype(family, order);

  const double fs2 = 2.0 * sample_rate;
  const double warped = fs2 * std::tan(pi * cutoff_hz / sample_rate);
  auto bilinear = [&](cplx s) { return (fs2 + s * warped) / (fs2 - s * warped); };

  std::vector<cplx> zd, pd;
  for (const auto& z : proto.zeros) zd.push_back(bilinear(z));
  for (const auto& p : proto.poles) pd.push_back(bilinear(p));
  while (zd.size() < pd.size()) zd.emplace_back(-1.0, 0.0);

  std::vector<cplx> pole_pairs, zero_pairs;
  std::vector<double> pole_reals, zero_reals;
  split_roots(pd, pole_pairs, pole_reals);
  split_roots(zd, zero_pairs, zero_reals);

  // Poles farthest from the unit circle first; each section takes the
  // nearest remaining zero pair.
  std::sort(pole_pairs.begin(), pole_pairs.end(),
            [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });

  SosFilter filter;
  auto take_zero_pair = [&](cplx near, double& b1, double& b2) {
    if (!zero_pairs.empty()) {
      auto it = std::min_element(zero_pairs.begin(), zero_pairs.end(), [&](cplx a, cplx b) {
        return std::abs(a - near) < std::abs(b - near);
      });
      b1 = -2.0 * it->real();
      b2 = std::norm(*it);
      zero_pairs.erase(it);
    } else if (zero_reals.size() >= 2) {
      const double z1 = zero_reals.back();
      zero_reals.pop_back();
      const double z2 = zero_reals.back();
      zero_reals.pop_back();
      b1 = -(z1 + z2);
      b2 = z1 * z2;
    } else {
      throw InternalError("unbalanced zero/pole pairing");
    }
  };

  for (const auto& p : pole_pairs) {
    Biquad s;
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    take_zero_pair(p, s.b1, s.b2);
    filter.sections.push_back(s);
  }
  while (pole_reals.size() >= 2) {
    Biquad s;
    const double p1 = pole_reals.back();
    pole_reals.pop_back();
    const double p2 = pole_reals.back();
    pole_reals.pop_back();
    s.a1 = -(p1 + p2);
    s.a2 = p1 * p2;
    take_zero_pair(cplx(p1, 0.0), s.b1, s.b2);
    filter.sections.push_back(s);
  }
  if (!pole_reals.empty()) {
    Biquad s;
    s.a1 = -pole_reals.back();
    if (zero_reals.empty()) throw InternalError("unbalanced zero/pole pairing");
    s.b1 = -zero_reals.back();
    filter.sections.push_back(s);
  }

  // Unit DC gain per section, then the prototype's DC gain on the first.
  for (auto& s : filter.sections) {
    const double gain = (1.0 + s.a1 + s.a2) / (s.b0 + s.b1 + s.b2);
    s.b0 *= gain;
    s.b1 *= gain;
    s.b2 *= gain;
  }
  if (!filter.sections.empty()) {
    auto& s = filter.sections.front();
    s.b0 *= proto.dc_gain;
    s.b1 *= proto.dc_gain;
    s.b2 *= proto.dc_gain;
  }
  return filter;
}

std::complex<double> SosFilter::response(double freq_hz, double sample_rate) const {
  const cplx zinv = std::polar(1.0, -2.0 * pi * freq_hz / sample_rate);
  cplx h = 1.0;
  for (const auto& s : sections) {
    h *= (s.b0 + zinv * (s.b1 + zinv * s.b2)) / (1.0 + zinv * (s.a1 + zinv * s.a2));
  }
  return h;
}

double SosFilter::max_pole_radius() const {
  double radius = 0.0;
  for (const auto& s : sections) {
    // Roots of z^2 + a1 z + a2.
    const cplx disc = std::sqrt(cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
    radius = std::max({radius, std::abs((-s.a1 + disc) / 2.0), std::abs((-s.a1 - disc) / 2.0)});
  }
  return radius;
}

std::vector<double> SosFilter::apply(std::span<const double> input) const {
  std::vector<double> y(input.begin(), input.end());
  for (const auto& s : sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double x = v;
      const double out = s.b0 * x + z1;
      z1 = s.b1 * x - s.a1 * out + z2;
      z2 = s.b2 * x - s.a2 * out;
      v = out;
    }
  }
  return y;
}

}  // namespace flashsr::dsp
