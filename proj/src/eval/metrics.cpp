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

#include "flashsr/eval/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

#include "flashsr/dsp/spectral.hpp"
#include "flashsr/error.hpp"

namespace flashsr::eval {

void SpectralMetricConfig::validate() const {
  if (hop < 1 || window < hop) throw InvalidArgument("metric STFT needs window >= hop >= 1");
  if (!(power_floor > 0.0)) throw InvalidArgument("metric power floor must be > 0");
}

SpectralMetricConfig SpectralMetricConfig::for_rate(int sample_rate) {
  SpectralMetricConfig c;
  c.window = static_cast<int>(std::lround(2048.0 * sample_rate / 48000.0));
  c.hop = static_cast<int>(std::lround(512.0 * sample_rate / 48000.0));
  return c;
}

namespace {

void check_pair(const dsp::Waveform& ref, const dsp::Waveform& est) {
  if (ref.sample_rate != est.sample_rate) {
    throw InvalidArgument("metric: sample rates differ (" + std::to_string(ref.sample_rate) +
                          " vs " + std::to_string(est.sample_rate) + ")");
  }
  if (ref.size() != est.size()) {
    throw InvalidArgument("metric: lengths differ (" + std::to_string(ref.size()) + " vs " +
                          std::to_string(est.size()) + ")");
  }
}

torch::Tensor magnitude(const dsp::Waveform& w, const SpectralMetricConfig& cfg) {
  return dsp::stft_magnitude(dsp::to_tensor(w, torch::kFloat64), cfg.window, cfg.hop);
}

double lsd_bins(const dsp::Waveform& ref, const dsp::Waveform& est, const SpectralMetricConfig& cfg,
                long bin_lo, long bin_hi) {
  cfg.validate();
  check_pair(ref, est);
  auto pr = magnitude(ref, cfg).pow(2).clamp_min(cfg.power_floor).log10();
  auto pe = magnitude(est, cfg).pow(2).clamp_min(cfg.power_floor).log10();
  if (pr.size(1) == 0) throw InvalidArgument("lsd: signal shorter than one hop");
  auto d = (pr - pe).narrow(0, bin_lo, bin_hi - bin_lo);
  return d.pow(2).mean(0).sqrt().mean().item<double>();
}

}  // namespace

double lsd(const dsp::Waveform& ref, const dsp::Waveform& est, const SpectralMetricConfig& cfg) {
  return lsd_bins(ref, est, cfg, 0, cfg.window / 2 + 1);
}

double lsd(const dsp::Waveform& ref, const dsp::Waveform& est) {
  return lsd(ref, est, SpectralMetricConfig::for_rate(ref.sample_rate));
}

double lsd_band(const dsp::Waveform& ref, const dsp::Waveform& est, const SpectralMetricConfig& cfg,
                double f_lo_hz, double f_hi_hz) {
  const long bins = cfg.window / 2 + 1;
  const double df = static_cast<double>(ref.sample_rate) / cfg.window;
  const long lo = std::clamp<long>(static_cast<long>(std::ceil(f_lo_hz / df)), 0, bins);
  const long hi = std::clamp<long>(static_cast<long>(std::floor(f_hi_hz / df)) + 1, 0, bins);
  if (hi <= lo) throw InvalidArgument("lsd_band: band holds no STFT bin");
  return lsd_bins(ref, est, cfg, lo, hi);
}

double stft_distance(const dsp::Waveform& ref, const dsp::Waveform& est,
                     const SpectralMetricConfig& cfg) {
  cfg.validate();
  check_pair(ref, est);
  auto d = magnitude(ref, cfg) - magnitude(est, cfg);
  if (d.size(1) == 0) throw InvalidArgument("stft_distance: signal shorter than one hop");
  return d.abs().mean().item<double>();
}

double stft_distance(const dsp::Waveform& ref, const dsp::Waveform& est) {
  return stft_distance(ref, est, SpectralMetricConfig::for_rate(ref.sample_rate));
}

RtfResult rtf_measure(const std::function<void()>& runner, double audio_seconds, int repeats,
                      int warmup, int nfe) {
  if (repeats < 1 || warmup < 0) throw InvalidArgument("rtf_measure: repeats >= 1, warmup >= 0");
  if (!(audio_seconds > 0.0)) throw InvalidArgument("rtf_measure: audio duration must be > 0");
  for (int i = 0; i < warmup; ++i) runner();
  RtfResult r;
  r.nfe = nfe;
  r.audio_seconds = audio_seconds;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    runner();
    r.samples.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  auto sorted = r.samples;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  r.wall_seconds = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  // Keep RTF strictly positive even for a runner below clock resolution.
  r.rtf = std::max(r.wall_seconds, 1e-12) / audio_seconds;
  return r;
}

std::vector<double> scaled_cutoffs(int sample_rate) {
  std::vector<double> out;
  for (double c : {4000.0, 8000.0, 12000.0}) {
    out.push_back(std::round(c * sample_rate / 48000.0));
  }
  return out;
}

dsp::FilterSpec eval_filter(const EvalConfig& cfg, size_t index, double cutoff_hz) {
  std::seed_seq seq{static_cast<uint32_t>(cfg.seed), static_cast<uint32_t>(cfg.seed >> 32),
                    static_cast<uint32_t>(index)};
  std::mt19937_64 rng(seq);
  const auto& fams = cfg.lowpass.families;
  if (fams.empty()) throw InvalidArgument("eval: no filter families configured");
  std::uniform_int_distribution<size_t> fam(0, fams.size() - 1);
  std::uniform_int_distribution<int> order(cfg.lowpass.order_lo, cfg.lowpass.order_hi);
  dsp::FilterSpec spec;
  spec.family = fams[fam(rng)];
  spec.order = order(rng);
  spec.cutoff_hz = cutoff_hz;
  return spec;
}

MetricReport eval_suite(const SrModel& model, const std::vector<EvalItem>& dataset,
                        const std::vector<double>& cutoffs, const EvalConfig& cfg) {
  if (dataset.empty()) throw InvalidArgument("eval_suite: empty dataset");
  if (cutoffs.empty()) throw InvalidArgument("eval_suite: no cutoffs");
  MetricReport report;
  for (double c : cutoffs) report.aggregates.push_back({c, 0.0, 0.0, 0});
  for (size_t i = 0; i < dataset.size(); ++i) {
    const auto& item = dataset[i];
    for (size_t k = 0; k < cutoffs.size(); ++k) {
      const auto spec = eval_filter(cfg, i, cutoffs[k]);
      const auto lr = dsp::degrade(item.hr, spec, cfg.lowpass.rate_round_trip);
      const auto est = model(lr, cutoffs[k]);
      MetricRow row{item.id, item.category, cutoffs[k], lsd(item.hr, est, cfg.metric),
                    stft_distance(item.hr, est, cfg.metric)};
      auto& agg = report.aggregates[k];
      agg.lsd += row.lsd;
      agg.stft_d += row.stft_d;
      ++agg.count;
      report.rows.push_back(std::move(row));
    }
  }
  for (auto& agg : report.aggregates) {
    agg.lsd /= agg.count;
    agg.stft_d /= agg.count;
  }
  return report;
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << "item_id,category,cutoff_hz,lsd,stft_d\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.item_id << ',' << r.category << ',' << r.cutoff_hz << ',' << r.lsd << ','
        << r.stft_d << '\n';
  }
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"item_id", r.item_id},
                         {"category", r.category},
                         {"cutoff_hz", r.cutoff_hz},
                         {"lsd", r.lsd},
                         {"stft_d", r.stft_d}});
  }
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : aggregates) {
    j["aggregates"].push_back(
        {{"cutoff_hz", a.cutoff_hz}, {"lsd", a.lsd}, {"stft_d", a.stft_d}, {"count", a.count}});
  }
  j["rtf"] = nlohmann::json::array();
  for (const auto& r : rtf) {
    j["rtf"].push_back({{"nfe", r.nfe},
                        {"wall_seconds", r.wall_seconds},
                        {"audio_seconds", r.audio_seconds},
                        {"rtf", r.rtf}});
  }
  return j;
}

void MetricReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

}  // namespace flashsr::eval
