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

#include "flashsr/denoiser/denoiser.hpp"

#include <cmath>

#include "flashsr/error.hpp"
#include "flashsr/io/checkpoint.hpp"
#include "flashsr/nn/layers.hpp"

namespace flashsr::denoiser {

namespace tnn = torch::nn;
namespace F = torch::nn::functional;

torch::Tensor predict_v(VModel& model, const torch::Tensor& z_t, const torch::Tensor& t,
                        const torch::Tensor& cond) {
  if (z_t.dim() != 4) throw InvalidArgument("predict_v: z_t must be [B, C, H, W]");
  if (cond.defined() && !cond.sizes().equals(z_t.sizes())) {
    throw InvalidArgument("predict_v: condition shape differs from z_t");
  }
  if (t.dim() != 1 || t.size(0) != z_t.size(0)) {
    throw InvalidArgument("predict_v: t must be [B]");
  }
  if (t.numel() > 0 && (t.min().item<double>() < 0.0 || t.max().item<double>() > 1.0)) {
    throw InvalidArgument("predict_v: t outside [0, 1]");
  }
  return model.forward(z_t, t, cond);
}

diffusion::VPredictor as_predictor(const VModelPtr& model) {
  return [model](const torch::Tensor& z, const torch::Tensor& t, const torch::Tensor& cond) {
    return model->forward(z, t, cond);
  };
}

// --- config -----------------------------------------------------------------

void DenoiserConfig::validate() const {
  if (latent_channels < 1) throw InvalidArgument("denoiser needs latent channels >= 1");
  if (widths.size() != 3) throw InvalidArgument("denoiser needs exactly three level widths");
  for (int w : widths) {
    if (w < 1) throw InvalidArgument("denoiser widths must be positive");
  }
  if (heads < 1 || widths.back() % heads != 0) {
    throw InvalidArgument("attention heads must divide the lowest-level width");
  }
  if (time_dim < 2) throw InvalidArgument("time embedding dim must be >= 2");
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"arch", "unet"},
          {"latent_channels", latent_channels},
          {"widths", widths},
          {"time_dim", time_dim},
          {"heads", heads}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.latent_channels = j.at("latent_channels");
  c.widths = j.at("widths").get<std::vector<int>>();
  c.time_dim = j.at("time_dim");
  c.heads = j.at("heads");
  return c;
}

nlohmann::json ToyDenoiserConfig::to_json() const {
  return {{"arch", "toy"},
          {"latent_channels", latent_channels},
          {"hidden", hidden},
          {"layers", layers},
          {"time_dim", time_dim}};
}

ToyDenoiserConfig ToyDenoiserConfig::from_json(const nlohmann::json& j) {
  ToyDenoiserConfig c;
  c.latent_channels = j.at("latent_channels");
  c.hidden = j.at("hidden");
  c.layers = j.at("layers");
  c.time_dim = j.at("time_dim");
  return c;
}

// --- blocks -----------------------------------------------------------------

ResBlockImpl::ResBlockImpl(int in, int out, int time_dim) {
  norm1_ = register_module("norm1", nn::group_norm(in));
  conv1_ = register_module("conv1", tnn::Conv2d(tnn::Conv2dOptions(in, out, 3).padding(1)));
  time_proj_ = register_module("time_proj", tnn::Linear(time_dim, out));
  norm2_ = register_module("norm2", nn::group_norm(out));
  conv2_ = register_module("conv2", tnn::Conv2d(tnn::Conv2dOptions(out, out, 3).padding(1)));
  if (in != out) skip_ = register_module("skip", tnn::Conv2d(tnn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
  auto h = conv1_->forward(torch::silu(norm1_->forward(x)));
  h = h + time_proj_->forward(temb).unsqueeze(-1).unsqueeze(-1);
  h = conv2_->forward(torch::silu(norm2_->forward(h)));
  return (skip_ ? skip_->forward(x) : x) + h;
}

AttentionBlockImpl::AttentionBlockImpl(int channels, int heads) : heads_(heads) {
  norm_ = register_module("norm", nn::group_norm(channels));
  q = register_module("q", LoraLinear(channels, channels));
  k = register_module("k", LoraLinear(channels, channels));
  v = register_module("v", LoraLinear(channels, channels));
  out = register_module("out", LoraLinear(channels, channels));
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  const auto d = c / heads_;
  auto tokens = norm_->forward(x).reshape({b, c, h * w}).transpose(1, 2);  // [B, N, C]
  auto split = [&](const torch::Tensor& t) {
    return t.reshape({b, h * w, heads_, d}).transpose(1, 2);  // [B, heads, N, d]
  };
  auto qh = split(q->forward(tokens));
  auto kh = split(k->forward(tokens));
  auto vh = split(v->forward(tokens));
  auto attn = torch::softmax(torch::matmul(qh, kh.transpose(-2, -1)) / std::sqrt(double(d)), -1);
  auto mixed = torch::matmul(attn, vh).transpose(1, 2).reshape({b, h * w, c});
  return x + out->forward(mixed).transpose(1, 2).reshape({b, c, h, w});
}

// --- U-Net ------------------------------------------------------------------

UNetDenoiser::UNetDenoiser(const DenoiserConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.latent_channels;
  const int w0 = cfg_.widths[0], w1 = cfg_.widths[1], w2 = cfg_.widths[2];
  const int td = cfg_.time_dim;

  time_mlp_ = register_module(
      "time_mlp", tnn::Sequential(tnn::Linear(td, td), tnn::SiLU(), tnn::Linear(td, td)));
  conv_in_ = register_module("conv_in", tnn::Conv2d(tnn::Conv2dOptions(2 * c, w0, 3).padding(1)));
  down0_ = register_module("down0", ResBlock(w0, w0, td));
  downsample0_ = register_module(
      "downsample0", tnn::Conv2d(tnn::Conv2dOptions(w0, w1, 3).stride(2).padding(1)));
  down1_ = register_module("down1", ResBlock(w1, w1, td));
  downsample1_ = register_module(
      "downsample1", tnn::Conv2d(tnn::Conv2dOptions(w1, w2, 3).stride(2).padding(1)));
  mid0_ = register_module("mid0", ResBlock(w2, w2, td));
  attention_ = register_module("attention", AttentionBlock(w2, cfg_.heads));
  mid1_ = register_module("mid1", ResBlock(w2, w2, td));
  upconv1_ = register_module("upconv1", tnn::Conv2d(tnn::Conv2dOptions(w2, w1, 3).padding(1)));
  up1_ = register_module("up1", ResBlock(2 * w1, w1, td));
  upconv0_ = register_module("upconv0", tnn::Conv2d(tnn::Conv2dOptions(w1, w0, 3).padding(1)));
  up0_ = register_module("up0", ResBlock(2 * w0, w0, td));
  norm_out_ = register_module("norm_out", nn::group_norm(w0));
  conv_out_ = register_module("conv_out", tnn::Conv2d(tnn::Conv2dOptions(w0, c, 3).padding(1)));
  null_latent_ = register_parameter("null_latent", torch::zeros({1, c, 1, 1}));
}

torch::Tensor UNetDenoiser::null_condition(const torch::Tensor& like) const {
  return null_latent_.expand(like.sizes());
}

torch::Tensor UNetDenoiser::forward(const torch::Tensor& z_t, const torch::Tensor& t,
                                    const torch::Tensor& cond) {
  const auto c = cond.defined() ? cond : null_condition(z_t);
  auto temb = time_mlp_->forward(nn::timestep_embedding(t.to(z_t.dtype()), cfg_.time_dim));

  auto h0 = down0_->forward(conv_in_->forward(torch::cat({z_t, c}, 1)), temb);
  auto h1 = down1_->forward(downsample0_->forward(h0), temb);
  auto h = mid0_->forward(downsample1_->forward(h1), temb);
  h = mid1_->forward(attention_->forward(h), temb);

  auto up = [](const torch::Tensor& x, const torch::Tensor& like) {
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{like.size(2), like.size(3)})
                                 .mode(torch::kNearest));
  };
  h = up1_->forward(torch::cat({upconv1_->forward(up(h, h1)), h1}, 1), temb);
  h = up0_->forward(torch::cat({upconv0_->forward(up(h, h0)), h0}, 1), temb);
  return conv_out_->forward(torch::silu(norm_out_->forward(h)));
}

std::vector<LoraLinear> UNetDenoiser::lora_targets() {
  return {attention_->q, attention_->k, attention_->v, attention_->out};
}

VModelPtr UNetDenoiser::clone_architecture() const {
  return std::make_shared<UNetDenoiser>(cfg_);
}

nlohmann::json UNetDenoiser::config_json() const { return cfg_.to_json(); }

// --- toy MLP ----------------------------------------------------------------

ToyDenoiser::ToyDenoiser(const ToyDenoiserConfig& cfg) : cfg_(cfg) {
  const int c = cfg_.latent_channels, hdim = cfg_.hidden, td = cfg_.time_dim;
  time_mlp_ = register_module(
      "time_mlp", tnn::Sequential(tnn::Linear(td, hdim), tnn::SiLU(), tnn::Linear(hdim, hdim)));
  in_ = register_module("in", tnn::Linear(2 * c, hdim));
  for (int i = 0; i < cfg_.layers; ++i) {
    hidden_.push_back(register_module("hidden" + std::to_string(i), LoraLinear(hdim, hdim)));
  }
  out_ = register_module("out", tnn::Linear(hdim, c));
  null_latent_ = register_parameter("null_latent", torch::zeros({1, c, 1, 1}));
}

torch::Tensor ToyDenoiser::null_condition(const torch::Tensor& like) const {
  return null_latent_.expand(like.sizes());
}

torch::Tensor ToyDenoiser::forward(const torch::Tensor& z_t, const torch::Tensor& t,
                                   const torch::Tensor& cond) {
  const auto c = cond.defined() ? cond : null_condition(z_t);
  const auto b = z_t.size(0);
  auto temb = time_mlp_->forward(nn::timestep_embedding(t.to(z_t.dtype()), cfg_.time_dim));
  auto h = in_->forward(torch::cat({z_t.reshape({b, -1}), c.reshape({b, -1})}, 1)) + temb;
  for (auto& layer : hidden_) h = h + layer->forward(torch::silu(h));
  return out_->forward(torch::silu(h)).reshape(z_t.sizes());
}

std::vector<LoraLinear> ToyDenoiser::lora_targets() { return hidden_; }

VModelPtr ToyDenoiser::clone_architecture() const { return std::make_shared<ToyDenoiser>(cfg_); }

nlohmann::json ToyDenoiser::config_json() const { return cfg_.to_json(); }

VModelPtr make_model(const nlohmann::json& config) {
  const auto arch = config.at("arch").get<std::string>();
  VModelPtr model;
  if (arch == "unet") {
    model = std::make_shared<UNetDenoiser>(DenoiserConfig::from_json(config));
  } else if (arch == "toy") {
    model = std::make_shared<ToyDenoiser>(ToyDenoiserConfig::from_json(config));
  } else {
    throw InvalidArgument("unknown denoiser architecture '" + arch + "'");
  }
  if (config.contains("lora") && !config["lora"].is_null()) {
    LoraConfig lora{config["lora"].at("rank"), config["lora"].at("scale")};
    for (auto& target : model->lora_targets()) target->enable_adapter(lora);
    freeze(*model);
    for (auto& target : model->lora_targets()) {
      target->lora_a.set_requires_grad(true);
      target->lora_b.set_requires_grad(true);
    }
  }
  return model;
}

// --- LoRA -------------------------------------------------------------------

void freeze(torch::nn::Module& model) {
  for (auto& p : model.parameters(true)) p.set_requires_grad(false);
}

VModelPtr apply_lora(const VModel& teacher, const LoraConfig& lora) {
  auto student = teacher.clone_architecture();
  io::load_state(*student, io::state_of(teacher));
  for (auto& target : student->lora_targets()) target->enable_adapter(lora);
  freeze(*student);
  for (auto& target : student->lora_targets()) {
    target->lora_a.set_requires_grad(true);
    target->lora_b.set_requires_grad(true);
  }
  return student;
}

void merge_lora(VModel& model) {
  for (auto& t : model.lora_targets()) t->merge();
}

void unmerge_lora(VModel& model) {
  for (auto& t : model.lora_targets()) t->unmerge();
}

void deactivate_lora(VModel& model) {
  for (auto& t : model.lora_targets()) t->deactivate();
}

void save_denoiser(const std::filesystem::path& path, VModel& model, const nlohmann::json& meta) {
  io::Checkpoint ckpt;
  ckpt.kind = "denoiser";
  ckpt.config = model.config_json();
  ckpt.config["lora"] = nullptr;
  auto targets = model.lora_targets();
  if (!targets.empty() && targets.front()->has_adapter()) {
    if (targets.front()->merged()) throw InvalidArgument("unmerge adapters before saving");
    const auto lora = targets.front()->adapter_config();
    ckpt.config["lora"] = {{"rank", lora.rank}, {"scale", lora.scale}};
  }
  ckpt.meta = meta.is_null() ? nlohmann::json::object() : meta;
  ckpt.tensors = io::state_of(model);
  io::save_checkpoint(path, ckpt);
}

VModelPtr load_denoiser(const std::filesystem::path& path) {
  auto ckpt = io::load_checkpoint(path);
  if (ckpt.kind != "denoiser") {
    throw InvalidArgument(path.string() + " is not a denoiser checkpoint");
  }
  auto model = make_model(ckpt.config);
  io::load_state(*model, ckpt.tensors);
  model->eval();
  return model;
}

}  // namespace flashsr::denoiser
