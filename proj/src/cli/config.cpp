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

#include "flashsr/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "flashsr/io/checkpoint.hpp"

namespace flashsr::cli {

std::string to_string(Profile p) { return p == Profile::kPaper ? "paper" : "desk"; }

Profile parse_profile(const std::string& s) {
  if (s == "desk") return Profile::kDesk;
  if (s == "paper") return Profile::kPaper;
  throw ConfigError("run.profile: expected desk or paper, got '" + s + "'");
}

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& s, const std::string& where) {
  T v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError(where + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
  }
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

template <class T>
Field field(const std::string& section, const std::string& key, T& ref) {
  const std::string where = section + "." + key;
  Field f{section, key, {}, {}};
  if constexpr (std::is_same_v<T, bool>) {
    f.get = [&ref] { return std::string(ref ? "true" : "false"); };
    f.set = [&ref, where](const std::string& s) {
      if (s == "true") {
        ref = true;
      } else if (s == "false") {
        ref = false;
      } else {
        throw ConfigError(where + ": expected true or false, got '" + s + "'");
      }
    };
  } else if constexpr (std::is_same_v<T, double>) {
    f.get = [&ref] { return fmt_double(ref); };
    f.set = [&ref, where](const std::string& s) { ref = parse_number<double>(s, where); };
  } else if constexpr (std::is_integral_v<T>) {
    f.get = [&ref] { return std::to_string(ref); };
    f.set = [&ref, where](const std::string& s) { ref = parse_number<T>(s, where); };
  } else if constexpr (std::is_same_v<T, std::string>) {
    f.get = [&ref] { return ref; };
    f.set = [&ref](const std::string& s) { ref = s; };
  } else if constexpr (std::is_same_v<T, std::vector<int>>) {
    f.get = [&ref] { return join<int>(ref, [](const int& v) { return std::to_string(v); }); };
    f.set = [&ref, where](const std::string& s) {
      ref.clear();
      for (const auto& item : split(s)) ref.push_back(parse_number<int>(item, where));
    };
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    f.get = [&ref] { return join<double>(ref, [](const double& v) { return fmt_double(v); }); };
    f.set = [&ref, where](const std::string& s) {
      ref.clear();
      for (const auto& item : split(s)) ref.push_back(parse_number<double>(item, where));
    };
  } else if constexpr (std::is_same_v<T, std::vector<dsp::FilterFamily>>) {
    f.get = [&ref] {
      return join<dsp::FilterFamily>(
          ref, [](const dsp::FilterFamily& v) { return std::string(dsp::to_string(v)); });
    };
    f.set = [&ref, where](const std::string& s) {
      ref.clear();
      for (const auto& item : split(s)) {
        try {
          ref.push_back(dsp::parse_filter_family(item));
        } catch (const std::exception& e) {
          throw ConfigError(where + ": " + e.what());
        }
      }
    };
  } else if constexpr (std::is_same_v<T, diffusion::SolverKind>) {
    f.get = [&ref] {
      return std::string(ref == diffusion::SolverKind::kDdim ? "ddim" : "dpm2m");
    };
    f.set = [&ref, where](const std::string& s) {
      if (s == "ddim") {
        ref = diffusion::SolverKind::kDdim;
      } else if (s == "dpm2m") {
        ref = diffusion::SolverKind::kDpmSolver2M;
      } else {
        throw ConfigError(where + ": expected ddim or dpm2m, got '" + s + "'");
      }
    };
  } else if constexpr (std::is_same_v<T, Profile>) {
    f.get = [&ref] { return to_string(ref); };
    f.set = [&ref](const std::string& s) { ref = parse_profile(s); };
  } else {
    static_assert(sizeof(T) == 0, "unsupported config field type");
  }
  return f;
}

std::vector<Field> fields(RunConfig& c) {
  return {
      field("run", "profile", c.profile),
      field("run", "seed", c.seed),
      field("run", "device", c.device),
      field("run", "dataset_dir", c.dataset_dir),
      field("run", "corpus_clips", c.corpus_clips),
      field("run", "clip_seconds", c.clip_seconds),

      field("mel", "window_size", c.mel.window_size),
      field("mel", "hop", c.mel.hop),
      field("mel", "n_mels", c.mel.n_mels),
      field("mel", "sample_rate", c.mel.sample_rate),
      field("mel", "log_floor", c.mel.log_floor),

      field("lowpass", "cutoff_lo_hz", c.lowpass.cutoff_lo_hz),
      field("lowpass", "cutoff_hi_hz", c.lowpass.cutoff_hi_hz),
      field("lowpass", "order_lo", c.lowpass.order_lo),
      field("lowpass", "order_hi", c.lowpass.order_hi),
      field("lowpass", "families", c.lowpass.families),
      field("lowpass", "rate_round_trip", c.lowpass.rate_round_trip),

      field("codec", "channels", c.codec.channels),
      field("codec", "compression", c.codec.compression),
      field("codec", "base_width", c.codec.base_width),
      field("codec", "epochs", c.codec_train.epochs),
      field("codec", "batch_size", c.codec_train.batch_size),
      field("codec", "lr", c.codec_train.lr),
      field("codec", "beta", c.codec_train.beta),

      field("teacher", "widths", c.denoiser.widths),
      field("teacher", "time_dim", c.denoiser.time_dim),
      field("teacher", "heads", c.denoiser.heads),
      field("teacher", "steps", c.teacher_train.steps),
      field("teacher", "batch_size", c.teacher_train.batch_size),
      field("teacher", "lr", c.teacher_train.lr),
      field("teacher", "weight_decay", c.teacher_train.weight_decay),
      field("teacher", "cond_dropout", c.teacher_train.cond_dropout),
      field("teacher", "checkpoint_every", c.teacher_train.checkpoint_every),

      field("lora", "rank", c.lora.rank),
      field("lora", "scale", c.lora.scale),

      field("distill", "omega", c.distill.omega),
      field("distill", "lambda_adv", c.distill.lambda_adv_final),
      field("distill", "lambda_dmd", c.distill.lambda_dmd_final),
      field("distill", "ramp_period", c.distill.ramp_period),
      field("distill", "ramp_end", c.distill.ramp_end),
      field("distill", "t_double_prime", c.distill.t_double_prime_set),
      field("distill", "teacher_grid_points", c.distill.teacher_grid_points),
      field("distill", "solver", c.distill.solver),
      field("distill", "normalize_dmd", c.distill.normalize_dmd),
      field("distill", "lr", c.distill.lr),
      field("distill", "disc_lr", c.distill.disc_lr),
      field("distill", "weight_decay", c.distill.weight_decay),
      field("distill", "batch_size", c.distill.batch_size),
      field("distill", "steps", c.distill.total_steps),

      field("vocoder", "upsample_rates", c.vocoder.upsample_rates),
      field("vocoder", "initial_channels", c.vocoder.initial_channels),
      field("vocoder", "resblock_dilations", c.vocoder.resblock_dilations),
      field("vocoder", "mpd_periods", c.vocoder.mpd_periods),
      field("vocoder", "fuse_lr", c.vocoder.fuse_lr),
      field("vocoder", "steps", c.vocoder_train.steps),
      field("vocoder", "batch_size", c.vocoder_train.batch_size),
      field("vocoder", "segment_frames", c.vocoder_train.segment_frames),
      field("vocoder", "lr", c.vocoder_train.lr),
      field("vocoder", "disc_lr", c.vocoder_train.disc_lr),
      field("vocoder", "lr_decay", c.vocoder_train.lr_decay),
      field("vocoder", "lambda_mel", c.vocoder_train.lambda_mel),
      field("vocoder", "lambda_fm", c.vocoder_train.lambda_fm),
      field("vocoder", "lambda_adv", c.vocoder_train.lambda_adv),
      field("vocoder", "adv_start_step", c.vocoder_train.adv_start_step),

      field("eval", "cutoffs_hz", c.eval.cutoffs_hz),
      field("eval", "rtf_repeats", c.eval.rtf_repeats),
      field("eval", "teacher_steps", c.eval.teacher_steps),
  };
}

}  // namespace

RunConfig RunConfig::for_profile(Profile p) {
  RunConfig c;
  c.profile = p;
  if (p == Profile::kPaper) {
    c.mel = dsp::MelConfig::paper();
    c.lowpass = dsp::LowpassSimConfig::for_rate(48000);
    c.clip_seconds = 5.12;
    c.denoiser.widths = {128, 256, 512};
    c.denoiser.time_dim = 512;
    c.denoiser.heads = 8;
    c.teacher_train.steps = 200000;
    c.teacher_train.batch_size = 16;
    c.distill = distill::DistillConfig::paper();
    c.vocoder = vocoder::VocoderConfig::paper();
    c.vocoder_train = vocoder::VocoderTrainConfig::paper();
    c.vocoder_train.steps = 1000000;
  } else {
    c.mel = dsp::MelConfig::desk();
    c.lowpass = dsp::LowpassSimConfig::for_rate(16000);
    c.teacher_train.steps = 2000;
    c.distill = distill::DistillConfig::desk();
    c.distill.ramp_period = 500;
    c.distill.ramp_end = 2000;
    c.distill.total_steps = 3000;
    c.vocoder = vocoder::VocoderConfig::desk();
    c.vocoder_train = vocoder::VocoderTrainConfig{};
    c.vocoder_train.steps = 3000;
  }
  c.codec.channels = c.denoiser.latent_channels;
  return c;
}

void RunConfig::validate() const {
  auto wrap = [](const std::string& where, const std::function<void()>& f) {
    try {
      f();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  };
  if (device != "cpu") throw ConfigError("run.device: only 'cpu' is supported, got '" + device + "'");
  if (corpus_clips < 1) throw ConfigError("run.corpus_clips: must be >= 1");
  if (!(clip_seconds > 0.0)) throw ConfigError("run.clip_seconds: must be > 0");
  wrap("mel", [&] { mel.validate(); });
  wrap("lowpass", [&] { lowpass.validate(mel.sample_rate); });
  wrap("codec", [&] { codec.validate(); });
  if (mel.n_mels % codec.compression != 0) {
    throw ConfigError("codec.compression: must divide mel.n_mels");
  }
  wrap("teacher", [&] { denoiser.validate(); });
  if (denoiser.latent_channels != codec.channels) {
    throw ConfigError("codec.channels: must equal the denoiser latent channels");
  }
  if (lora.rank < 1) throw ConfigError("lora.rank: must be >= 1");
  wrap("distill", [&] { distill.validate(); });
  wrap("vocoder", [&] {
    vocoder.validate();
    vocoder_train.validate();
  });
  if (vocoder.hop() != mel.hop) {
    throw ConfigError("vocoder.upsample_rates: product must equal mel.hop");
  }
  if (vocoder.n_mels != mel.n_mels || vocoder.sample_rate != mel.sample_rate ||
      !(vocoder_train.mel == mel)) {
    throw ConfigError("vocoder: mel settings must match [mel]");
  }
  if (eval.rtf_repeats < 1) throw ConfigError("eval.rtf_repeats: must be >= 1");
  if (eval.teacher_steps < 1) throw ConfigError("eval.teacher_steps: must be >= 1");
  for (double c : eval.cutoffs_hz) {
    if (!(c > 0.0 && c < mel.sample_rate / 2.0)) {
      throw ConfigError("eval.cutoffs_hz: " + fmt_double(c) + " is outside (0, Nyquist)");
    }
  }
}

std::string RunConfig::to_ini() const {
  auto copy = *this;
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields(copy)) {
    if (f.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << f.section << "]\n";
      section = f.section;
    }
    out << f.key << " = " << f.get() << '\n';
  }
  return out.str();
}

RunConfig RunConfig::from_ini(const std::string& text, std::optional<Profile> profile) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
  }

  Profile p = Profile::kDesk;
  if (auto run = tree.get_child_optional("run")) {
    if (auto v = run->get_optional<std::string>("profile")) p = parse_profile(*v);
  }
  if (profile) p = *profile;

  RunConfig c = for_profile(p);
  std::map<std::pair<std::string, std::string>, Field> index;
  for (auto& f : fields(c)) index.emplace(std::make_pair(f.section, f.key), std::move(f));

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(section + ": key outside any section");
    }
    for (const auto& [key, value] : body) {
      auto it = index.find({section, key});
      if (it == index.end()) throw ConfigError(section + "." + key + ": unknown key");
      if (section == "run" && key == "profile") continue;
      it->second.set(value.data());
    }
  }
  c.codec_train.seed = c.teacher_train.seed = c.distill.seed = c.vocoder_train.seed = c.seed;
  c.denoiser.latent_channels = c.codec.channels;
  c.vocoder_train.mel = c.mel;
  c.vocoder.n_mels = c.mel.n_mels;
  c.vocoder.sample_rate = c.mel.sample_rate;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path, std::optional<Profile> profile) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_ini(ss.str(), profile);
}

std::string RunConfig::hash() const { return io::sha1_hex(to_ini()); }

}  // namespace flashsr::cli
