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

#include "flashsr/codec/vae.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <random>

#include "flashsr/error.hpp"
#include "flashsr/io/checkpoint.hpp"
#include "flashsr/nn/layers.hpp"

namespace flashsr::codec {

namespace tnn = torch::nn;

void CodecConfig::validate() const {
  if (channels < 1 || base_width < 1) throw InvalidArgument("codec channels/width must be >= 1");
  if (compression < 1 || !std::has_single_bit(static_cast<unsigned>(compression))) {
    throw InvalidArgument("codec compression must be a power of two");
  }
}

int CodecConfig::stages() const { return std::countr_zero(static_cast<unsigned>(compression)); }

nlohmann::json CodecConfig::to_json() const {
  return {{"channels", channels}, {"compression", compression}, {"base_width", base_width}};
}

CodecConfig CodecConfig::from_json(const nlohmann::json& j) {
  CodecConfig c;
  c.channels = j.at("channels");
  c.compression = j.at("compression");
  c.base_width = j.at("base_width");
  return c;
}

namespace {

// Narrow initial posterior so sampling noise does not swamp reconstruction.
constexpr double kInitialLogvar = -6.0;
constexpr double kMaxGradNorm = 1.0;

int stage_width(const CodecConfig& cfg, int i) { return cfg.base_width * std::min(1 << i, 4); }

}  // namespace

MelVaeImpl::MelVaeImpl(const CodecConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int n = cfg_.stages();

  auto act = [](tnn::Sequential& seq, int channels) {
    seq->push_back(nn::group_norm(channels));
    seq->push_back(tnn::SiLU());
  };

  encoder_ = tnn::Sequential();
  encoder_->push_back(tnn::Conv2d(tnn::Conv2dOptions(1, stage_width(cfg_, 0), 3).padding(1)));
  act(encoder_, stage_width(cfg_, 0));
  for (int i = 0; i < n; ++i) {
    const int in = stage_width(cfg_, i), out = stage_width(cfg_, i + 1);
    encoder_->push_back(tnn::Conv2d(tnn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    act(encoder_, out);
    encoder_->push_back(tnn::Conv2d(tnn::Conv2dOptions(out, out, 3).padding(1)));
    act(encoder_, out);
  }
  auto head = tnn::Conv2d(tnn::Conv2dOptions(stage_width(cfg_, n), 2 * cfg_.channels, 3).padding(1));
  encoder_->push_back(head);

  decoder_ = tnn::Sequential();
  decoder_->push_back(
      tnn::Conv2d(tnn::Conv2dOptions(cfg_.channels, stage_width(cfg_, n), 3).padding(1)));
  act(decoder_, stage_width(cfg_, n));
  for (int i = n - 1; i >= 0; --i) {
    const int in = stage_width(cfg_, i + 1), out = stage_width(cfg_, i);
    decoder_->push_back(
        tnn::ConvTranspose2d(tnn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1)));
    act(decoder_, out);
    decoder_->push_back(tnn::Conv2d(tnn::Conv2dOptions(out, out, 3).padding(1)));
    act(decoder_, out);
  }
  decoder_->push_back(tnn::Conv2d(tnn::Conv2dOptions(stage_width(cfg_, 0), 1, 3).padding(1)));

  {
    // He init: the default fan-in uniform scale lets the signal vanish
    // through the SiLU stack and stalls the first few hundred steps.
    torch::NoGradGuard no_grad;
    auto he = [](torch::Tensor& w, torch::Tensor& b) {
      tnn::init::kaiming_normal_(w, 0.0, torch::kFanIn, torch::kReLU);
      b.zero_();
    };
    for (auto& m : encoder_->modules(false)) {
      if (auto* c = m->as<tnn::Conv2dImpl>()) he(c->weight, c->bias);
    }
    for (auto& m : decoder_->modules(false)) {
      if (auto* c = m->as<tnn::Conv2dImpl>()) he(c->weight, c->bias);
      if (auto* c = m->as<tnn::ConvTranspose2dImpl>()) he(c->weight, c->bias);
    }
    head->bias.narrow(0, cfg_.channels, cfg_.channels).fill_(kInitialLogvar);
  }

  register_module("encoder", encoder_);
  register_module("decoder", decoder_);
  mel_mean = register_buffer("mel_mean", torch::zeros({}));
  mel_std = register_buffer("mel_std", torch::ones({}));
  latent_scale = register_buffer("latent_scale", torch::ones({}));
}

long MelVaeImpl::padded_frames(long frames) const {
  const long r = cfg_.compression;
  return (frames + r - 1) / r * r;
}

torch::Tensor MelVaeImpl::pad_time(const torch::Tensor& mels) const {
  const long frames = mels.size(2);
  const long pad = padded_frames(frames) - frames;
  if (pad == 0) return mels;
  auto opts = tnn::functional::PadFuncOptions({0, pad});
  if (pad < frames) {
    opts.mode(torch::kReflect);
  } else {
    opts.mode(torch::kReplicate);
  }
  return tnn::functional::pad(mels, opts);
}

std::pair<torch::Tensor, torch::Tensor> MelVaeImpl::posterior(const torch::Tensor& mels) {
  if (mels.dim() != 3) throw InvalidArgument("codec expects mels [B, F, T]");
  if (mels.size(1) % cfg_.compression != 0) {
    throw InvalidArgument("mel bin count " + std::to_string(mels.size(1)) +
                          " is not divisible by the compression " +
                          std::to_string(cfg_.compression));
  }
  auto x = (pad_time(mels) - mel_mean) / mel_std;
  x = x.transpose(1, 2).unsqueeze(1);  // [B, 1, T, F]
  auto h = encoder_->forward(x);
  auto parts = h.chunk(2, 1);
  auto mean = parts[0] * latent_scale;
  auto logvar = torch::clamp(parts[1], -30.0, 20.0) + 2.0 * torch::log(latent_scale);
  return {mean, logvar};
}

torch::Tensor MelVaeImpl::reconstruct(const torch::Tensor& latents) {
  auto x = decoder_->forward(latents / latent_scale);  // [B, 1, T, F]
  x = x.squeeze(1).transpose(1, 2);
  return x * mel_std + mel_mean;
}

LatentGrid encode(MelVae& vae, const dsp::MelSpectrogram& mel) {
  torch::NoGradGuard no_grad;
  auto [mean, logvar] = vae->posterior(mel.values.unsqueeze(0));
  return {mean.squeeze(0), mel.frames()};
}

LatentGrid encode_sampled(MelVae& vae, const dsp::MelSpectrogram& mel, torch::Generator gen) {
  torch::NoGradGuard no_grad;
  auto [mean, logvar] = vae->posterior(mel.values.unsqueeze(0));
  auto eps = torch::randn(mean.sizes(), gen, mean.options());
  return {(mean + torch::exp(0.5 * logvar) * eps).squeeze(0), mel.frames()};
}

dsp::MelSpectrogram decode(MelVae& vae, const LatentGrid& z, const dsp::MelConfig& mel_cfg) {
  return {decode_batch(vae, z.values.unsqueeze(0), z.frames).squeeze(0), mel_cfg};
}

torch::Tensor encode_batch(MelVae& vae, const torch::Tensor& mels) {
  torch::NoGradGuard no_grad;
  return vae->posterior(mels).first;
}

torch::Tensor decode_batch(MelVae& vae, const torch::Tensor& latents, long frames) {
  torch::NoGradGuard no_grad;
  auto mels = vae->reconstruct(latents);
  if (frames > mels.size(2)) throw InvalidArgument("decode: frame count exceeds latent extent");
  return mels.narrow(2, 0, frames).contiguous();
}

CodecTrainReport train_codec(MelVae& vae, const std::vector<dsp::MelSpectrogram>& dataset,
                             const CodecTrainConfig& cfg) {
  if (dataset.empty()) throw InvalidArgument("train_codec: empty dataset");
  std::vector<torch::Tensor> items;
  for (const auto& m : dataset) items.push_back(m.values.to(torch::kFloat32));
  auto all = torch::stack(items);  // throws on ragged shapes
  {
    torch::NoGradGuard no_grad;
    vae->mel_mean.fill_(all.mean().item<double>());
    vae->mel_std.fill_(std::max(all.std().item<double>(), 1e-3));
    vae->latent_scale.fill_(1.0);
  }

  torch::manual_seed(cfg.seed);
  auto gen = torch::make_generator<at::CPUGeneratorImpl>(cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  torch::optim::Adam opt(vae->parameters(), torch::optim::AdamOptions(cfg.lr));

  const long n = all.size(0);
  const long frames = all.size(2);
  const long padded = vae->padded_frames(frames);
  std::vector<long> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0L);

  CodecTrainReport report;
  vae->train();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_loss = 0.0, sum_rec = 0.0, sum_kl = 0.0;
    int batches = 0;
    for (long start = 0; start < n; start += cfg.batch_size) {
      const long end = std::min<long>(n, start + cfg.batch_size);
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + start, order.begin() + end));
      auto x = all.index_select(0, idx);
      auto [mean, logvar] = vae->posterior(x);
      auto z = mean + torch::exp(0.5 * logvar) * torch::randn(mean.sizes(), gen, mean.options());
      auto rec = vae->reconstruct(z);
      auto target = x;
      if (padded != frames) rec = rec.narrow(2, 0, frames);
      auto l1 = torch::abs(rec - target).mean();
      auto kl = 0.5 * (mean.pow(2) + logvar.exp() - logvar - 1.0).mean();
      auto loss = cfg.beta > 0.0 ? l1 + cfg.beta * kl : l1;
      opt.zero_grad();
      loss.backward();
      torch::nn::utils::clip_grad_norm_(vae->parameters(), kMaxGradNorm);
      opt.step();
      sum_loss += loss.item<double>();
      sum_rec += l1.item<double>();
      sum_kl += cfg.beta > 0.0 ? cfg.beta * kl.item<double>() : 0.0;
      ++batches;
    }
    report.epoch_loss.push_back(sum_loss / batches);
    report.epoch_recon.push_back(sum_rec / batches);
    report.epoch_kl.push_back(sum_kl / batches);
    if (!cfg.checkpoint_dir.empty()) {
      auto path = cfg.checkpoint_dir / ("codec-epoch" + std::to_string(epoch + 1) + ".ckpt");
      save_codec(path, vae, {{"epoch", epoch + 1}, {"loss", report.epoch_loss.back()}});
      report.checkpoints.push_back(path);
    }
  }
  vae->eval();

  {
    torch::NoGradGuard no_grad;
    auto means = vae->posterior(all).first;
    vae->latent_scale.fill_(1.0 / std::max(means.std().item<double>(), 1e-6));
  }
  return report;
}

void save_codec(const std::filesystem::path& path, MelVae& vae, const nlohmann::json& meta) {
  io::Checkpoint ckpt;
  ckpt.kind = "codec";
  ckpt.config = vae->config().to_json();
  ckpt.meta = meta.is_null() ? nlohmann::json::object() : meta;
  ckpt.tensors = io::state_of(*vae);
  io::save_checkpoint(path, ckpt);
}

MelVae load_codec(const std::filesystem::path& path) {
  auto ckpt = io::load_checkpoint(path);
  if (ckpt.kind != "codec") throw InvalidArgument(path.string() + " is not a codec checkpoint");
  MelVae vae(CodecConfig::from_json(ckpt.config));
  io::load_state(*vae, ckpt.tensors);
  vae->eval();
  return vae;
}

}  // namespace flashsr::codec
