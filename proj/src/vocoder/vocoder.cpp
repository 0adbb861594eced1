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

#include "flashsr/vocoder/vocoder.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "flashsr/error.hpp"
#include "flashsr/io/checkpoint.hpp"

namespace flashsr::vocoder {

namespace tnn = torch::nn;
namespace F = torch::nn::functional;

namespace {

constexpr double kLeak = 0.1;

torch::Tensor leaky(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeak));
}

nlohmann::json scale_to_json(const CqtScale& s) {
  return {{"hop", s.hop},
          {"bins_per_octave", s.bins_per_octave},
          {"octaves", s.octaves},
          {"fmin_hz", s.fmin_hz},
          {"band_groups", s.band_groups}};
}

CqtScale scale_from_json(const nlohmann::json& j) {
  CqtScale s;
  s.hop = j.at("hop");
  s.bins_per_octave = j.at("bins_per_octave");
  s.octaves = j.at("octaves");
  s.fmin_hz = j.at("fmin_hz");
  s.band_groups = j.at("band_groups");
  return s;
}

}  // namespace

void VocoderConfig::validate() const {
  if (n_mels < 1 || sample_rate <= 0) throw InvalidArgument("vocoder: bad mel count or rate");
  if (upsample_rates.empty()) throw InvalidArgument("vocoder: need at least one upsample stage");
  for (int r : upsample_rates) {
    if (r < 1) throw InvalidArgument("vocoder: upsample rates must be >= 1");
  }
  if (initial_channels >> upsample_rates.size() < 1) {
    throw InvalidArgument("vocoder: too few initial channels for the stage count");
  }
  if (resblock_kernel % 2 == 0) throw InvalidArgument("vocoder: resblock kernel must be odd");
  if (aa_taps < 4 || aa_taps % 2 != 0) throw InvalidArgument("vocoder: aa_taps must be even >= 4");
  for (int p : mpd_periods) {
    if (p < 1) throw InvalidArgument("vocoder: MPD periods must be >= 1");
  }
  for (const auto& s : cqt_scales) {
    if (s.hop < 1 || s.bins_per_octave < 1 || s.octaves < 1 || s.fmin_hz <= 0.0) {
      throw InvalidArgument("vocoder: bad CQT scale");
    }
    if (s.band_groups < 1 || s.band_groups > s.octaves) {
      throw InvalidArgument("vocoder: CQT band groups must be in [1, octaves]");
    }
    const double top = s.fmin_hz * std::pow(2.0, (s.n_bins() - 1.0) / s.bins_per_octave);
    if (top >= sample_rate / 2.0) {
      throw InvalidArgument("vocoder: highest CQT bin " + std::to_string(top) +
                            " Hz is above Nyquist");
    }
  }
}

int VocoderConfig::hop() const {
  return std::accumulate(upsample_rates.begin(), upsample_rates.end(), 1, std::multiplies<>());
}

int VocoderConfig::stage_channels(int stage) const { return initial_channels >> (stage + 1); }

nlohmann::json VocoderConfig::to_json() const {
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& s : cqt_scales) scales.push_back(scale_to_json(s));
  return {{"n_mels", n_mels},
          {"sample_rate", sample_rate},
          {"upsample_rates", upsample_rates},
          {"initial_channels", initial_channels},
          {"resblock_dilations", resblock_dilations},
          {"resblock_kernel", resblock_kernel},
          {"aa_taps", aa_taps},
          {"mpd_periods", mpd_periods},
          {"cqt_scales", scales},
          {"fuse_lr", fuse_lr}};
}

VocoderConfig VocoderConfig::from_json(const nlohmann::json& j) {
  VocoderConfig c;
  c.n_mels = j.at("n_mels");
  c.sample_rate = j.at("sample_rate");
  c.upsample_rates = j.at("upsample_rates").get<std::vector<int>>();
  c.initial_channels = j.at("initial_channels");
  c.resblock_dilations = j.at("resblock_dilations").get<std::vector<int>>();
  c.resblock_kernel = j.at("resblock_kernel");
  c.aa_taps = j.at("aa_taps");
  c.mpd_periods = j.at("mpd_periods").get<std::vector<int>>();
  c.cqt_scales.clear();
  for (const auto& s : j.at("cqt_scales")) c.cqt_scales.push_back(scale_from_json(s));
  c.fuse_lr = j.at("fuse_lr");
  c.validate();
  return c;
}

VocoderConfig VocoderConfig::desk() { return VocoderConfig{}; }

VocoderConfig VocoderConfig::paper() {
  VocoderConfig c;
  c.n_mels = 256;
  c.sample_rate = 48000;
  c.upsample_rates = {6, 5, 4, 4};
  c.initial_channels = 512;
  c.resblock_dilations = {1, 3, 5};
  c.cqt_scales = {CqtScale{512, 24, 9, 32.7, 3}, CqtScale{256, 36, 9, 32.7, 3},
                  CqtScale{256, 48, 9, 32.7, 3}};
  return c;
}

torch::Tensor half_band_kernel(int taps) {
  // Cutoff and transition half-width in cycles per sample of the 2x rate.
  const double cutoff = 0.25;
  const double half_width = 0.3;
  const double atten = 2.285 * (taps / 2 - 1) * std::numbers::pi * 4.0 * half_width + 7.95;
  double beta = 0.0;
  if (atten > 50.0) {
    beta = 0.1102 * (atten - 8.7);
  } else if (atten >= 21.0) {
    beta = 0.5842 * std::pow(atten - 21.0, 0.4) + 0.07886 * (atten - 21.0);
  }
  std::vector<double> h(taps);
  const double center = (taps - 1) / 2.0;
  double sum = 0.0;
  for (int n = 0; n < taps; ++n) {
    const double x = n - center;
    const double r = x / (center + 0.5);
    const double window =
        std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) /
        std::cyl_bessel_i(0.0, beta);
    const double arg = 2.0 * cutoff * x;
    const double sinc = arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    h[n] = 2.0 * cutoff * sinc * window;
    sum += h[n];
  }
  for (auto& v : h) v /= sum;
  return torch::tensor(h, torch::kFloat32);
}

SnakeImpl::SnakeImpl(int channels) {
  log_alpha_ = register_parameter("log_alpha", torch::zeros({1, channels, 1}));
}

torch::Tensor SnakeImpl::forward(const torch::Tensor& x) {
  auto alpha = log_alpha_.exp();
  return x + (alpha * x).sin().pow(2) / (alpha + 1e-9);
}

AntiAliasedActivationImpl::AntiAliasedActivationImpl(int channels, int taps)
    : channels_(channels), taps_(taps) {
  act_ = register_module("act", Snake(channels));
  kernel_ = register_buffer("kernel", half_band_kernel(taps).view({1, 1, taps}));
}

torch::Tensor AntiAliasedActivationImpl::forward(const torch::Tensor& x) {
  auto k = kernel_.to(x.dtype()).expand({channels_, 1, taps_});
  // Upsample by 2: replicate-pad, zero-stuff via a strided transpose conv, crop.
  const int pad = taps_ / 2 - 1;
  const int crop = 2 * pad + (taps_ - 2) / 2;
  auto up = F::pad(x, F::PadFuncOptions({pad, pad}).mode(torch::kReplicate));
  up = 2.0 * F::conv_transpose1d(up, k, F::ConvTranspose1dFuncOptions().stride(2).groups(channels_));
  up = up.narrow(-1, crop, 2 * x.size(-1));

  auto y = act_->forward(up);

  y = F::pad(y, F::PadFuncOptions({taps_ / 2 - 1, taps_ / 2}).mode(torch::kReplicate));
  return F::conv1d(y, k, F::Conv1dFuncOptions().stride(2).groups(channels_));
}

AmpBlockImpl::AmpBlockImpl(int channels, int kernel, const std::vector<int>& dilations, int taps) {
  for (size_t i = 0; i < dilations.size(); ++i) {
    const int d = dilations[i];
    acts_.push_back(register_module("act" + std::to_string(i), AntiAliasedActivation(channels, taps)));
    convs_.push_back(register_module(
        "conv" + std::to_string(i),
        tnn::Conv1d(tnn::Conv1dOptions(channels, channels, kernel).dilation(d).padding(d * (kernel - 1) / 2))));
  }
}

torch::Tensor AmpBlockImpl::forward(torch::Tensor x) {
  for (size_t i = 0; i < convs_.size(); ++i) x = x + convs_[i]->forward(acts_[i]->forward(x));
  return x;
}

LrEncoderImpl::LrEncoderImpl(const VocoderConfig& cfg) {
  const int stages = static_cast<int>(cfg.upsample_rates.size());
  input_ = register_module(
      "input", tnn::Conv1d(tnn::Conv1dOptions(1, cfg.stage_channels(stages - 1), 7).padding(3)));
  down_.resize(stages - 1, nullptr);
  for (int k = stages - 2; k >= 0; --k) {
    const int r = cfg.upsample_rates[k + 1];
    down_[k] = register_module(
        "down" + std::to_string(k),
        tnn::Conv1d(tnn::Conv1dOptions(cfg.stage_channels(k + 1), cfg.stage_channels(k), 2 * r + 1)
                        .stride(r)
                        .padding(r)));
  }
}

std::vector<torch::Tensor> LrEncoderImpl::forward(const torch::Tensor& lr) {
  const size_t stages = down_.size() + 1;
  std::vector<torch::Tensor> feats(stages);
  feats[stages - 1] = leaky(input_->forward(lr.unsqueeze(1)));
  for (int k = static_cast<int>(stages) - 2; k >= 0; --k) {
    feats[k] = leaky(down_[k]->forward(feats[k + 1]));
  }
  return feats;
}

GeneratorImpl::GeneratorImpl(const VocoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  pre_ = register_module(
      "pre", tnn::Conv1d(tnn::Conv1dOptions(cfg.n_mels, cfg.initial_channels, 7).padding(3)));
  int in_ch = cfg.initial_channels;
  for (size_t k = 0; k < cfg.upsample_rates.size(); ++k) {
    const int u = cfg.upsample_rates[k];
    const int kernel = 2 * u + u % 2;
    const int out_ch = cfg.stage_channels(static_cast<int>(k));
    ups_.push_back(register_module(
        "up" + std::to_string(k),
        tnn::ConvTranspose1d(
            tnn::ConvTranspose1dOptions(in_ch, out_ch, kernel).stride(u).padding((kernel - u) / 2))));
    blocks_.push_back(register_module(
        "amp" + std::to_string(k),
        AmpBlock(out_ch, cfg.resblock_kernel, cfg.resblock_dilations, cfg.aa_taps)));
    in_ch = out_ch;
  }
  post_act_ = register_module("post_act", AntiAliasedActivation(in_ch, cfg.aa_taps));
  post_ = register_module("post", tnn::Conv1d(tnn::Conv1dOptions(in_ch, 1, 7).padding(3)));
  if (cfg.fuse_lr) encoder_ = register_module("lr_encoder", LrEncoder(cfg));
}

std::vector<torch::Tensor> GeneratorImpl::lr_encode(const torch::Tensor& lr) {
  if (!encoder_) return {};
  return encoder_->forward(lr);
}

std::vector<std::vector<int64_t>> GeneratorImpl::stage_shapes(int64_t b, int64_t frames) const {
  std::vector<std::vector<int64_t>> shapes;
  int64_t len = frames;
  for (size_t k = 0; k < cfg_.upsample_rates.size(); ++k) {
    len *= cfg_.upsample_rates[k];
    shapes.push_back({b, cfg_.stage_channels(static_cast<int>(k)), len});
  }
  return shapes;
}

torch::Tensor GeneratorImpl::forward_with(const torch::Tensor& mel,
                                          const std::vector<torch::Tensor>& lr_feats) {
  if (mel.dim() != 3 || mel.size(1) != cfg_.n_mels) {
    throw InvalidArgument("generator: mel must be [B, " + std::to_string(cfg_.n_mels) + ", T]");
  }
  if (!lr_feats.empty() && lr_feats.size() != ups_.size()) {
    throw InvalidArgument("generator: need one lr feature map per stage");
  }
  auto x = pre_->forward(mel);
  for (size_t k = 0; k < ups_.size(); ++k) {
    x = ups_[k]->forward(leaky(x));
    if (!lr_feats.empty()) x = feature_fuse(x, lr_feats[k]);
    x = blocks_[k]->forward(x);
  }
  x = post_->forward(post_act_->forward(x));
  return torch::tanh(x).squeeze(1);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& mel, const torch::Tensor& lr) {
  if (mel.dim() != 3 || lr.dim() != 2 || lr.size(0) != mel.size(0) ||
      lr.size(1) != mel.size(2) * cfg_.hop()) {
    throw InvalidArgument("generator: lr must be [B, hop * T] for mel [B, F, T]");
  }
  return forward_with(mel, lr_encode(lr));
}

torch::Tensor feature_fuse(const torch::Tensor& gen_feat, const torch::Tensor& lr_feat) {
  if (!lr_feat.defined()) return gen_feat;
  if (!gen_feat.sizes().equals(lr_feat.sizes())) {
    throw InvalidArgument("feature_fuse: shape mismatch");
  }
  return gen_feat + lr_feat;
}

dsp::Waveform generate_waveform(Generator& gen, const dsp::MelSpectrogram& mel,
                                const dsp::Waveform& lr) {
  const auto& cfg = gen->config();
  if (lr.sample_rate != cfg.sample_rate) {
    throw InvalidArgument("generate_waveform: lr must be at " + std::to_string(cfg.sample_rate) +
                          " Hz");
  }
  if (static_cast<long>(lr.size()) != mel.frames() * cfg.hop()) {
    throw InvalidArgument("generate_waveform: lr has " + std::to_string(lr.size()) +
                          " samples, expected hop * T = " +
                          std::to_string(mel.frames() * cfg.hop()));
  }
  torch::NoGradGuard no_grad;
  gen->eval();
  auto out = gen->forward(mel.values.to(torch::kFloat32).unsqueeze(0),
                          dsp::to_tensor(lr).unsqueeze(0));
  return dsp::from_tensor(out[0], cfg.sample_rate);
}

torch::Tensor period_reshape(const torch::Tensor& x, int period) {
  auto y = x.unsqueeze(1);
  const int64_t n = x.size(-1);
  if (n % period != 0) {
    const int64_t pad = period - n % period;
    F::PadFuncOptions opts({0, pad});
    if (pad < n) {
      opts.mode(torch::kReflect);
    } else {
      opts.mode(torch::kReplicate);
    }
    y = F::pad(y, opts);
  }
  return y.view({x.size(0), 1, -1, period});
}

PeriodDiscriminatorImpl::PeriodDiscriminatorImpl(int period) : period_(period) {
  const std::vector<int> widths = {1, 16, 32, 64, 64};
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const int stride = i + 2 < widths.size() ? 3 : 1;
    convs_.push_back(register_module(
        "conv" + std::to_string(i),
        tnn::Conv2d(tnn::Conv2dOptions(widths[i], widths[i + 1], {5, 1})
                        .stride({stride, 1})
                        .padding({2, 0}))));
  }
  post_ = register_module("post",
                          tnn::Conv2d(tnn::Conv2dOptions(widths.back(), 1, {3, 1}).padding({1, 0})));
}

std::pair<torch::Tensor, std::vector<torch::Tensor>> PeriodDiscriminatorImpl::forward(
    const torch::Tensor& x) {
  std::vector<torch::Tensor> feats;
  auto h = period_reshape(x, period_);
  for (auto& c : convs_) {
    h = leaky(c->forward(h));
    feats.push_back(h);
  }
  h = post_->forward(h);
  feats.push_back(h);
  return {h.flatten(1), feats};
}

MultiPeriodDiscriminatorImpl::MultiPeriodDiscriminatorImpl(const std::vector<int>& periods) {
  for (int p : periods) {
    subs_.push_back(register_module("p" + std::to_string(p), PeriodDiscriminator(p)));
  }
}

DiscOutput MultiPeriodDiscriminatorImpl::forward(const torch::Tensor& x) {
  DiscOutput out;
  for (auto& d : subs_) {
    auto [score, feats] = d->forward(x);
    out.scores.push_back(score);
    out.features.push_back(std::move(feats));
  }
  return out;
}

CqtTransformImpl::CqtTransformImpl(const CqtScale& scale, int sample_rate)
    : scale_(scale), sample_rate_(sample_rate) {
  const int bins = scale.n_bins();
  const double q = 1.0 / (std::pow(2.0, 1.0 / scale.bins_per_octave) - 1.0);
  kernel_len_ = static_cast<int>(std::ceil(q * sample_rate / scale.fmin_hz)) | 1;
  auto bank = torch::zeros({2 * bins, 1, kernel_len_}, torch::kFloat64);
  auto acc = bank.accessor<double, 3>();
  const auto freqs = center_frequencies();
  const int mid = kernel_len_ / 2;
  for (int k = 0; k < bins; ++k) {
    const int len = std::min(kernel_len_, static_cast<int>(std::ceil(q * sample_rate / freqs[k])));
    for (int n = 0; n < len; ++n) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (n + 0.5) / len);
      const double phase = 2.0 * std::numbers::pi * freqs[k] * (n - len / 2.0) / sample_rate;
      const int pos = mid - len / 2 + n;
      acc[k][0][pos] = w * std::cos(phase) / len;
      acc[bins + k][0][pos] = w * std::sin(phase) / len;
    }
  }
  kernels_ = register_buffer("kernels", bank.to(torch::kFloat32));
}

std::vector<double> CqtTransformImpl::center_frequencies() const {
  std::vector<double> f(scale_.n_bins());
  for (int k = 0; k < scale_.n_bins(); ++k) {
    f[k] = scale_.fmin_hz * std::pow(2.0, static_cast<double>(k) / scale_.bins_per_octave);
  }
  return f;
}

torch::Tensor CqtTransformImpl::forward(const torch::Tensor& x) {
  const int pad = kernel_len_ / 2;
  auto y = F::pad(x.unsqueeze(1), F::PadFuncOptions({pad, pad}));
  auto out = F::conv1d(y, kernels_.to(x.dtype()), F::Conv1dFuncOptions().stride(scale_.hop));
  const int bins = scale_.n_bins();
  return out.view({x.size(0), 2, bins, -1});
}

torch::Tensor CqtTransformImpl::magnitude(const torch::Tensor& x) {
  auto c = forward(x);
  return (c.select(1, 0).pow(2) + c.select(1, 1).pow(2)).sqrt();
}

SubBandCqtDiscriminatorImpl::SubBandCqtDiscriminatorImpl(const CqtScale& scale, int sample_rate) {
  constexpr int kWidth = 32;
  cqt_ = register_module("cqt", CqtTransform(scale, sample_rate));
  for (int g = 0; g < scale.band_groups; ++g) {
    const int o0 = g * scale.octaves / scale.band_groups;
    const int o1 = (g + 1) * scale.octaves / scale.band_groups;
    bands_.emplace_back(o0 * scale.bins_per_octave, o1 * scale.bins_per_octave);
    band_convs_.push_back(register_module(
        "band" + std::to_string(g),
        tnn::Sequential(tnn::Conv2d(tnn::Conv2dOptions(2, kWidth, 3).padding(1)),
                        tnn::LeakyReLU(tnn::LeakyReLUOptions().negative_slope(kLeak)),
                        tnn::Conv2d(tnn::Conv2dOptions(kWidth, kWidth, 3).padding(1)),
                        tnn::LeakyReLU(tnn::LeakyReLUOptions().negative_slope(kLeak)))));
  }
  merge_ = register_module("merge", tnn::Conv2d(tnn::Conv2dOptions(kWidth, kWidth, 3).padding(1)));
  post_ = register_module("post", tnn::Conv2d(tnn::Conv2dOptions(kWidth, 1, 3).padding(1)));
}

std::pair<torch::Tensor, std::vector<torch::Tensor>> SubBandCqtDiscriminatorImpl::forward(
    const torch::Tensor& x) {
  auto c = cqt_->forward(x);
  std::vector<torch::Tensor> feats, parts;
  for (size_t g = 0; g < bands_.size(); ++g) {
    auto band = c.narrow(2, bands_[g].first, bands_[g].second - bands_[g].first);
    auto h = band_convs_[g]->forward(band);
    feats.push_back(h);
    parts.push_back(h);
  }
  auto h = leaky(merge_->forward(torch::cat(parts, 2)));
  feats.push_back(h);
  h = post_->forward(h);
  feats.push_back(h);
  return {h.flatten(1), feats};
}

MultiScaleCqtDiscriminatorImpl::MultiScaleCqtDiscriminatorImpl(const std::vector<CqtScale>& scales,
                                                               int sample_rate) {
  for (size_t i = 0; i < scales.size(); ++i) {
    subs_.push_back(register_module("s" + std::to_string(i),
                                    SubBandCqtDiscriminator(scales[i], sample_rate)));
  }
}

DiscOutput MultiScaleCqtDiscriminatorImpl::forward(const torch::Tensor& x) {
  DiscOutput out;
  for (auto& d : subs_) {
    auto [score, feats] = d->forward(x);
    out.scores.push_back(score);
    out.features.push_back(std::move(feats));
  }
  return out;
}

DiscOutput discriminate_mpd(MultiPeriodDiscriminator& d, const torch::Tensor& x) {
  return d->forward(x);
}

DiscOutput discriminate_cqt(MultiScaleCqtDiscriminator& d, const torch::Tensor& x) {
  return d->forward(x);
}

torch::Tensor feature_matching_loss(const DiscOutput& real, const DiscOutput& fake) {
  if (real.features.size() != fake.features.size()) {
    throw InvalidArgument("feature_matching_loss: sub-discriminator count mismatch");
  }
  torch::Tensor total;
  int64_t count = 0;
  for (size_t i = 0; i < real.features.size(); ++i) {
    if (real.features[i].size() != fake.features[i].size()) {
      throw InvalidArgument("feature_matching_loss: feature count mismatch");
    }
    for (size_t j = 0; j < real.features[i].size(); ++j) {
      auto l = (real.features[i][j] - fake.features[i][j]).abs().mean();
      total = total.defined() ? total + l : l;
      ++count;
    }
  }
  if (count == 0) throw InvalidArgument("feature_matching_loss: no features");
  return total / static_cast<double>(count);
}

torch::Tensor generator_adv_loss(const DiscOutput& fake) {
  torch::Tensor total;
  for (const auto& s : fake.scores) {
    auto l = (s - 1.0).pow(2).mean();
    total = total.defined() ? total + l : l;
  }
  return total;
}

torch::Tensor discriminator_loss(const DiscOutput& real, const DiscOutput& fake) {
  torch::Tensor total;
  for (size_t i = 0; i < real.scores.size(); ++i) {
    auto l = (real.scores[i] - 1.0).pow(2).mean() + fake.scores[i].pow(2).mean();
    total = total.defined() ? total + l : l;
  }
  return total;
}

std::vector<MelResolution> default_mel_resolutions(int sample_rate) {
  const double s = sample_rate / 16000.0;
  auto w = [s](int v) { return static_cast<int>(std::lround(v * s)); };
  return {{w(256), w(64), 32}, {w(512), w(128), 64}, {w(1024), w(256), 64}};
}

torch::Tensor msmel_loss(const torch::Tensor& a, const torch::Tensor& b,
                         const std::vector<MelResolution>& resolutions, int sample_rate) {
  if (!a.sizes().equals(b.sizes())) throw InvalidArgument("msmel_loss: shape mismatch");
  if (resolutions.empty()) throw InvalidArgument("msmel_loss: no resolutions");
  torch::Tensor total;
  for (const auto& r : resolutions) {
    if (a.size(-1) < r.hop) throw InvalidArgument("msmel_loss: signal shorter than one hop");
    auto fb = dsp::mel_filterbank(r.n_mels, r.window, sample_rate, a.scalar_type());
    auto la = dsp::log_mel(a, fb, r.window, r.hop, 1e-5);
    auto lb = dsp::log_mel(b, fb, r.window, r.hop, 1e-5);
    auto l = (la - lb).abs().mean();
    total = total.defined() ? total + l : l;
  }
  return total / static_cast<double>(resolutions.size());
}

void VocoderTrainConfig::validate() const {
  if (steps < 0 || batch_size < 1 || segment_frames < 1) {
    throw InvalidArgument("vocoder training: steps >= 0, batch >= 1, segment >= 1 frame");
  }
  if (!(lr > 0.0) || !(disc_lr > 0.0)) throw InvalidArgument("vocoder training: lr must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
    throw InvalidArgument("vocoder training: lr decay must be in (0, 1]");
  }
  mel.validate();
}

VocoderTrainConfig VocoderTrainConfig::paper() {
  VocoderTrainConfig c;
  c.lr = 5e-5;
  c.disc_lr = 5e-5;
  c.batch_size = 16;
  c.mel = dsp::MelConfig::paper();
  return c;
}

double decayed_lr(double lr0, double decay, int64_t step) {
  return lr0 * std::pow(decay, static_cast<double>(step));
}

VocoderTrainState make_vocoder_state(const VocoderConfig& cfg, const VocoderTrainConfig& train) {
  cfg.validate();
  train.validate();
  if (train.mel.hop != cfg.hop() || train.mel.n_mels != cfg.n_mels ||
      train.mel.sample_rate != cfg.sample_rate) {
    throw InvalidArgument("vocoder: mel config does not match the generator");
  }
  torch::manual_seed(train.seed);
  VocoderTrainState s;
  s.generator = Generator(cfg);
  s.mpd = MultiPeriodDiscriminator(cfg.mpd_periods);
  s.cqt = MultiScaleCqtDiscriminator(cfg.cqt_scales, cfg.sample_rate);
  s.gen_opt = std::make_unique<torch::optim::AdamW>(
      s.generator->parameters(), torch::optim::AdamWOptions(train.lr).betas({0.8, 0.99}));
  auto disc_params = s.mpd->parameters();
  for (auto& p : s.cqt->parameters()) disc_params.push_back(p);
  s.disc_opt = std::make_unique<torch::optim::AdamW>(
      disc_params, torch::optim::AdamWOptions(train.disc_lr).betas({0.8, 0.99}));
  s.rng = torch::make_generator<at::CPUGeneratorImpl>(train.seed);
  return s;
}

namespace {

void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
  }
}

}  // namespace

std::vector<VocoderStepReport> train_vocoder(VocoderTrainState& state,
                                             const std::vector<VocoderPair>& dataset,
                                             const VocoderTrainConfig& cfg, int steps) {
  cfg.validate();
  if (dataset.empty()) throw InvalidArgument("train_vocoder: empty dataset");
  const int hop = cfg.mel.hop;
  const int64_t seg = static_cast<int64_t>(cfg.segment_frames) * hop;
  for (const auto& p : dataset) {
    if (p.hr.size() != p.lr.size() || p.hr.sample_rate != cfg.mel.sample_rate ||
        p.lr.sample_rate != cfg.mel.sample_rate) {
      throw InvalidArgument("train_vocoder: hr / lr pairs must share rate and length");
    }
    if (static_cast<int64_t>(p.hr.size()) < seg) {
      throw InvalidArgument("train_vocoder: clip shorter than one training segment");
    }
  }
  std::vector<torch::Tensor> hr, lr;
  for (const auto& p : dataset) {
    hr.push_back(dsp::to_tensor(p.hr));
    lr.push_back(dsp::to_tensor(p.lr));
  }
  const auto fb = dsp::mel_filterbank(cfg.mel.n_mels, cfg.mel.window_size, cfg.mel.sample_rate,
                                      torch::kFloat32);
  const auto resolutions = default_mel_resolutions(cfg.mel.sample_rate);

  std::vector<VocoderStepReport> reports;
  state.generator->train();
  for (int it = 0; it < steps; ++it) {
    std::vector<torch::Tensor> hb, lb;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int64_t i =
          torch::randint(static_cast<int64_t>(dataset.size()), {1}, state.rng).item<int64_t>();
      const int64_t slots = (hr[i].size(0) - seg) / hop + 1;
      const int64_t off = torch::randint(slots, {1}, state.rng).item<int64_t>() * hop;
      hb.push_back(hr[i].narrow(0, off, seg));
      lb.push_back(lr[i].narrow(0, off, seg));
    }
    auto real = torch::stack(hb);
    auto low = torch::stack(lb);
    auto mel = dsp::log_mel(real, fb, cfg.mel.window_size, hop, cfg.mel.log_floor);

    VocoderStepReport rep;
    rep.step = state.step;
    rep.lr = decayed_lr(cfg.lr, cfg.lr_decay, state.step);
    set_lr(*state.gen_opt, rep.lr);
    set_lr(*state.disc_opt, decayed_lr(cfg.disc_lr, cfg.lr_decay, state.step));
    const bool adversarial = state.step >= cfg.adv_start_step && cfg.lambda_adv + cfg.lambda_fm > 0;

    auto fake = state.generator->forward(mel, low);

    if (adversarial) {
      auto fake_d = fake.detach();
      auto loss_d = discriminator_loss(state.mpd->forward(real), state.mpd->forward(fake_d)) +
                    discriminator_loss(state.cqt->forward(real), state.cqt->forward(fake_d));
      state.disc_opt->zero_grad();
      loss_d.backward();
      state.disc_opt->step();
      rep.disc = loss_d.item<double>();
    }

    auto loss_mel = msmel_loss(real, fake, resolutions, cfg.mel.sample_rate);
    auto total = cfg.lambda_mel * loss_mel;
    if (adversarial) {
      DiscOutput real_mpd, real_cqt;
      {
        torch::NoGradGuard no_grad;
        real_mpd = state.mpd->forward(real);
        real_cqt = state.cqt->forward(real);
      }
      auto fake_mpd = state.mpd->forward(fake);
      auto fake_cqt = state.cqt->forward(fake);
      auto fm = feature_matching_loss(real_mpd, fake_mpd) + feature_matching_loss(real_cqt, fake_cqt);
      auto adv = generator_adv_loss(fake_mpd) + generator_adv_loss(fake_cqt);
      total = total + cfg.lambda_fm * fm + cfg.lambda_adv * adv;
      rep.fm = fm.item<double>();
      rep.adv = adv.item<double>();
    }
    state.gen_opt->zero_grad();
    total.backward();
    state.gen_opt->step();
    rep.mel = loss_mel.item<double>();
    if (!std::isfinite(rep.mel) || !std::isfinite(rep.fm) || !std::isfinite(rep.adv) ||
        !std::isfinite(rep.disc)) {
      throw InternalError("train_vocoder: non-finite loss at step " + std::to_string(state.step));
    }
    reports.push_back(rep);
    ++state.step;
  }
  state.generator->eval();
  return reports;
}

void save_vocoder(const std::filesystem::path& path, Generator& gen, const nlohmann::json& meta) {
  io::Checkpoint ckpt;
  ckpt.kind = "vocoder";
  ckpt.config = gen->config().to_json();
  ckpt.meta = meta.is_null() ? nlohmann::json::object() : meta;
  ckpt.tensors = io::state_of(*gen);
  io::save_checkpoint(path, ckpt);
}

Generator load_vocoder(const std::filesystem::path& path) {
  auto ckpt = io::load_checkpoint(path);
  if (ckpt.kind != "vocoder") throw InvalidArgument(path.string() + " is not a vocoder checkpoint");
  Generator gen(VocoderConfig::from_json(ckpt.config));
  io::load_state(*gen, ckpt.tensors);
  gen->eval();
  return gen;
}

}  // namespace flashsr::vocoder
