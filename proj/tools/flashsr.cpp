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

// Command-line driver: corpus preparation, the four training stages,
// inference and evaluation.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "flashsr/cli/config.hpp"
#include "flashsr/codec/vae.hpp"
#include "flashsr/denoiser/denoiser.hpp"
#include "flashsr/denoiser/teacher.hpp"
#include "flashsr/distill/distill.hpp"
#include "flashsr/dsp/lowpass.hpp"
#include "flashsr/dsp/waveform.hpp"
#include "flashsr/error.hpp"
#include "flashsr/eval/metrics.hpp"
#include "flashsr/io/checkpoint.hpp"
#include "flashsr/pipeline/pipeline.hpp"
#include "flashsr/vocoder/vocoder.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace flashsr;

namespace {

constexpr int kExitMissingCheckpoint = 2;
constexpr int kExitConfig = 3;

class MissingCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::string profile;
  std::optional<uint64_t> seed;
  std::string out_dir = "runs";
  std::string device = "cpu";
  std::optional<int> steps;
  std::string data_dir;
};

struct Paths {
  std::string codec, teacher, student, vocoder, input, output, in_dir, model = "identity";
  int count = 10;
  double seconds = 1.0;
  int nfe = 0;
};

cli::RunConfig resolve_config(const Common& o) {
  std::optional<cli::Profile> profile;
  if (!o.profile.empty()) profile = cli::parse_profile(o.profile);
  auto cfg = o.config_path.empty()
                 ? cli::RunConfig::for_profile(profile.value_or(cli::Profile::kDesk))
                 : cli::RunConfig::load(o.config_path, profile);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.codec_train.seed = cfg.teacher_train.seed = cfg.distill.seed = cfg.vocoder_train.seed =
        *o.seed;
  }
  cfg.device = o.device;
  if (!o.data_dir.empty()) cfg.dataset_dir = o.data_dir;
  cfg.validate();
  // Module constructors draw initial weights from the global generator, which
  // libtorch seeds from the clock.
  torch::manual_seed(cfg.seed);
  return cfg;
}

fs::path require_checkpoint(const std::string& path, const std::string& what) {
  if (path.empty()) throw MissingCheckpoint("missing --" + what + " checkpoint");
  if (!fs::is_regular_file(path)) throw MissingCheckpoint(what + " checkpoint not found: " + path);
  return path;
}

fs::path cache_dir(const Common& o) {
  if (const char* env = std::getenv("FLASHSR_CACHE"); env && *env) return env;
  return fs::path(o.out_dir) / "cache";
}

// Synthesized corpora are written once as float WAVs under the cache and
// reread on later runs.
std::vector<eval::EvalItem> corpus(const cli::RunConfig& cfg, const Common& o) {
  const int sr = cfg.mel.sample_rate;
  if (!cfg.dataset_dir.empty()) return pipeline::load_corpus(cfg.dataset_dir, cfg.clip_seconds, sr);
  const std::string key = io::sha1_hex("synth|" + std::to_string(cfg.corpus_clips) + "|" +
                                       std::to_string(cfg.clip_seconds) + "|" +
                                       std::to_string(sr) + "|" + std::to_string(cfg.seed))
                              .substr(0, 8);
  const fs::path dir = cache_dir(o) / ("synth-" + key);
  auto items = pipeline::synth_corpus(cfg.corpus_clips, cfg.clip_seconds, sr, cfg.seed);
  if (fs::is_directory(dir)) {
    bool complete = true;
    for (auto& it : items) {
      const auto f = dir / (it.id + ".wav");
      if (!fs::is_regular_file(f)) {
        complete = false;
        break;
      }
      it.hr = dsp::read_wav(f);
    }
    if (complete) return items;
    items = pipeline::synth_corpus(cfg.corpus_clips, cfg.clip_seconds, sr, cfg.seed);
  }
  fs::create_directories(dir);
  for (const auto& it : items) {
    dsp::write_wav(dir / (it.id + ".wav"), it.hr, dsp::WavEncoding::kFloat32);
  }
  return items;
}

std::string stem_for(const std::string& command, long step, const cli::RunConfig& cfg) {
  return command + "-" + std::to_string(step) + "-" + cfg.hash().substr(0, 8);
}

void write_manifest(const fs::path& out_dir, const std::string& stem, const std::string& command,
                    const cli::RunConfig& cfg, const std::map<std::string, fs::path>& inputs,
                    const std::map<std::string, fs::path>& outputs,
                    const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j;
  j["command"] = command;
  j["profile"] = cli::to_string(cfg.profile);
  j["seed"] = cfg.seed;
  j["config_hash"] = cfg.hash();
  j["config"] = cfg.to_ini();
  auto describe = [](const std::map<std::string, fs::path>& files) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [name, path] : files) {
      out[name] = {{"path", path.string()}, {"git_blob", io::git_blob_hash_file(path)}};
    }
    return out;
  };
  j["inputs"] = describe(inputs);
  j["outputs"] = describe(outputs);
  j["extra"] = extra;
  std::ofstream(out_dir / (stem + ".manifest.json")) << j.dump(2) << '\n';
  std::ofstream(out_dir / ("config-" + cfg.hash().substr(0, 8) + ".ini")) << cfg.to_ini();
}

int cmd_synth_corpus(const Common& o, const Paths& p) {
  auto cfg = resolve_config(o);
  const fs::path out = fs::path(o.out_dir) / "corpus";
  fs::create_directories(out);
  auto items = pipeline::synth_corpus(p.count, p.seconds, cfg.mel.sample_rate, cfg.seed);
  std::map<std::string, fs::path> outputs;
  for (const auto& it : items) {
    const auto f = out / (it.id + ".wav");
    dsp::write_wav(f, it.hr, dsp::WavEncoding::kFloat32);
    outputs[it.id] = f;
  }
  write_manifest(o.out_dir, stem_for("synth-corpus", p.count, cfg), "synth-corpus", cfg, {},
                 outputs);
  std::cout << "wrote " << items.size() << " clips to " << out << '\n';
  return 0;
}

int cmd_simulate_lr(const Common& o, const Paths& p) {
  auto cfg = resolve_config(o);
  if (p.in_dir.empty() || !fs::is_directory(p.in_dir)) {
    throw InvalidArgument("simulate-lr: --in-dir must name a directory");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p.in_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  const fs::path out = fs::path(o.out_dir) / "lr";
  fs::create_directories(out);
  nlohmann::json filters = nlohmann::json::array();
  std::map<std::string, fs::path> inputs, outputs;
  for (size_t i = 0; i < files.size(); ++i) {
    auto hr = dsp::read_wav(files[i]);
    auto sim = cfg.lowpass;
    if (hr.sample_rate != cfg.mel.sample_rate) sim = dsp::LowpassSimConfig::for_rate(hr.sample_rate);
    std::seed_seq seq{static_cast<uint32_t>(cfg.seed), static_cast<uint32_t>(i)};
    std::mt19937_64 rng(seq);
    auto [lr, spec] = dsp::simulate_lr(hr, sim, rng);
    const auto f = out / files[i].filename();
    dsp::write_wav(f, lr, dsp::WavEncoding::kFloat32);
    filters.push_back({{"file", files[i].filename().string()},
                       {"family", std::string(dsp::to_string(spec.family))},
                       {"order", spec.order},
                       {"cutoff_hz", spec.cutoff_hz}});
    inputs[files[i].stem().string()] = files[i];
    outputs[files[i].stem().string()] = f;
  }
  write_manifest(o.out_dir, stem_for("simulate-lr", static_cast<long>(files.size()), cfg),
                 "simulate-lr", cfg, inputs, outputs, {{"filters", filters}});
  std::cout << "simulated " << files.size() << " files into " << out << '\n';
  return 0;
}

int cmd_train_codec(const Common& o, const Paths&) {
  auto cfg = resolve_config(o);
  if (o.steps) cfg.codec_train.epochs = *o.steps;
  auto items = corpus(cfg, o);
  auto clips = pipeline::simulate_pairs(items, cfg.lowpass, cfg.seed);
  std::vector<dsp::Waveform> waves;
  for (const auto& c : clips) {
    waves.push_back(c.hr);
    waves.push_back(c.lr);
  }
  codec::MelVae vae(cfg.codec);
  auto report = codec::train_codec(vae, pipeline::mel_list(waves, cfg.mel), cfg.codec_train);
  const auto stem = stem_for("train-codec", cfg.codec_train.epochs, cfg);
  const fs::path ckpt = fs::path(o.out_dir) / (stem + ".ckpt");
  const fs::path log = fs::path(o.out_dir) / (stem + ".log.csv");
  codec::save_codec(ckpt, vae, {{"epochs", cfg.codec_train.epochs}});
  std::ofstream out(log);
  out << "epoch,loss,recon,kl\n" << std::setprecision(9);
  for (size_t e = 0; e < report.epoch_loss.size(); ++e) {
    out << e + 1 << ',' << report.epoch_loss[e] << ',' << report.epoch_recon[e] << ','
        << report.epoch_kl[e] << '\n';
  }
  out.close();
  write_manifest(o.out_dir, stem, "train-codec", cfg, {}, {{"checkpoint", ckpt}, {"log", log}});
  std::cout << ckpt.string() << '\n';
  return 0;
}

denoiser::LatentPairs latents(const cli::RunConfig& cfg, const Common& o, codec::MelVae& vae) {
  auto clips = pipeline::simulate_pairs(corpus(cfg, o), cfg.lowpass, cfg.seed);
  return pipeline::encode_pairs(vae, clips, cfg.mel);
}

int cmd_train_teacher(const Common& o, const Paths& p) {
  auto cfg = resolve_config(o);
  if (o.steps) cfg.teacher_train.steps = *o.steps;
  const auto codec_path = require_checkpoint(p.codec, "codec");
  auto vae = codec::load_codec(codec_path);
  auto data = latents(cfg, o, vae);
  torch::manual_seed(cfg.seed);
  auto model = std::make_shared<denoiser::UNetDenoiser>(cfg.denoiser);
  diffusion::NoiseSchedule sched;
  auto report = denoiser::train_teacher(*model, data, sched, cfg.teacher_train);
  const auto stem = stem_for("train-teacher", cfg.teacher_train.steps, cfg);
  const fs::path ckpt = fs::path(o.out_dir) / (stem + ".ckpt");
  const fs::path log = fs::path(o.out_dir) / (stem + ".log.csv");
  denoiser::save_denoiser(ckpt, *model, {{"steps", cfg.teacher_train.steps}});
  std::ofstream out(log);
  out << "step,loss\n" << std::setprecision(9);
  for (size_t s = 0; s < report.loss.size(); ++s) out << s << ',' << report.loss[s] << '\n';
  out.close();
  write_manifest(o.out_dir, stem, "train-teacher", cfg, {{"codec", codec_path}},
                 {{"checkpoint", ckpt}, {"log", log}});
  std::cout << ckpt.string() << '\n';
  return 0;
}

int cmd_distill(const Common& o, const Paths& p) {
  auto cfg = resolve_config(o);
  const int steps = o.steps.value_or(cfg.distill.total_steps);
  const auto codec_path = require_checkpoint(p.codec, "codec");
  const auto teacher_path = require_checkpoint(p.teacher, "teacher");
  auto vae = codec::load_codec(codec_path);
  auto teacher = denoiser::load_denoiser(teacher_path);
  auto data = latents(cfg, o, vae);
  diffusion::NoiseSchedule sched;
  auto state = distill::make_distill_state(teacher, cfg.lora, cfg.distill);
  const auto stem = stem_for("distill", steps, cfg);
  distill::DistillRunConfig run;
  run.steps = steps;
  run.log_path = fs::path(o.out_dir) / (stem + ".log.csv");
  distill::run_distillation(state, data, cfg.distill, sched, run);
  const fs::path ckpt = fs::path(o.out_dir) / (stem + ".ckpt");
  denoiser::save_denoiser(ckpt, *state.student, {{"step", state.step}});
  write_manifest(o.out_dir, stem, "distill", cfg, {{"codec", codec_path}, {"teacher", teacher_path}},
                 {{"checkpoint", ckpt}, {"log", run.log_path}});
  std::cout << ckpt.string() << '\n';
  return 0;
}

int cmd_train_vocoder(const Common& o, const Paths&) {
  auto cfg = resolve_config(o);
  const int steps = o.steps.value_or(cfg.vocoder_train.steps);
  auto clips = pipeline::simulate_pairs(corpus(cfg, o), cfg.lowpass, cfg.seed);
  auto state = vocoder::make_vocoder_state(cfg.vocoder, cfg.vocoder_train);
  auto reports = vocoder::train_vocoder(state, pipeline::vocoder_pairs(clips), cfg.vocoder_train, steps);
  const auto stem = stem_for("train-vocoder", steps, cfg);
  const fs::path ckpt = fs::path(o.out_dir) / (stem + ".ckpt");
  const fs::path log = fs::path(o.out_dir) / (stem + ".log.csv");
  vocoder::save_vocoder(ckpt, state.generator, {{"steps", steps}});
  std::ofstream out(log);
  out << "step,mel,fm,adv,disc,lr\n" << std::setprecision(9);
  for (const auto& r : reports) {
    out << r.step << ',' << r.mel << ',' << r.fm << ',' << r.adv << ',' << r.disc << ',' << r.lr
        << '\n';
  }
  out.close();
  write_manifest(o.out_dir, stem, "train-vocoder", cfg, {}, {{"checkpoint", ckpt}, {"log", log}});
  std::cout << ckpt.string() << '\n';
  return 0;
}

struct LoadedSystem {
  pipeline::SrSystem sys;
  std::map<std::string, fs::path> inputs;
  int nfe = 1;
};

LoadedSystem load_system(const cli::RunConfig& cfg, const Paths& p,
                         const diffusion::NoiseSchedule& sched) {
  LoadedSystem ls;
  const auto codec_path = require_checkpoint(p.codec, "codec");
  const auto vocoder_path = require_checkpoint(p.vocoder, "vocoder");
  ls.sys.codec = codec::load_codec(codec_path);
  ls.sys.vocoder = vocoder::load_vocoder(vocoder_path);
  ls.sys.mel = cfg.mel;
  ls.inputs = {{"codec", codec_path}, {"vocoder", vocoder_path}};
  if (p.nfe > 0) {
    const auto teacher_path = require_checkpoint(p.teacher, "teacher");
    ls.sys.sampler = pipeline::teacher_sampler(denoiser::load_denoiser(teacher_path), sched, p.nfe,
                                               cfg.distill.omega, cfg.seed, cfg.distill.solver);
    ls.inputs["teacher"] = teacher_path;
    ls.nfe = cfg.distill.omega == 1.0 ? p.nfe : 2 * p.nfe;
  } else {
    const auto student_path = require_checkpoint(p.student, "student");
    ls.sys.sampler =
        pipeline::student_sampler(denoiser::load_denoiser(student_path), sched, cfg.seed);
    ls.inputs["student"] = student_path;
  }
  return ls;
}

int cmd_infer(const Common& o, const Paths& p) {
  auto cfg = resolve_config(o);
  diffusion::NoiseSchedule sched;
  auto ls = load_system(cfg, p, sched);
  if (p.input.empty() || !fs::is_regular_file(p.input)) {
    throw InvalidArgument("infer: --input must name a WAV file");
  }
  auto out = pipeline::super_resolve(ls.sys, dsp::read_wav(p.input));
  const fs::path dest =
      p.output.empty() ? fs::path(o.out_dir) / (fs::path(p.input).stem().string() + "-sr.wav")
                       : fs::path(p.output);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  dsp::write_wav(dest, out, dsp::WavEncoding::kFloat32);
  ls.inputs["input"] = p.input;
  write_manifest(o.out_dir, stem_for("infer", ls.nfe, cfg), "infer", cfg, ls.inputs,
                 {{"output", dest}});
  std::cout << dest.string() << '\n';
  return 0;
}

int cmd_evaluate(const Common& o, const Paths& p) {
  auto cfg = resolve_config(o);
  auto items = corpus(cfg, o);
  eval::EvalConfig ec;
  ec.seed = cfg.seed;
  ec.lowpass = cfg.lowpass;
  ec.metric = eval::SpectralMetricConfig::for_rate(cfg.mel.sample_rate);
  const auto cutoffs =
      cfg.eval.cutoffs_hz.empty() ? eval::scaled_cutoffs(cfg.mel.sample_rate) : cfg.eval.cutoffs_hz;

  diffusion::NoiseSchedule sched;
  eval::MetricReport report;
  std::map<std::string, fs::path> inputs;
  if (p.model == "identity") {
    report = eval::eval_suite(pipeline::identity_model(), items, cutoffs, ec);
  } else if (p.model == "flashsr") {
    auto ls = load_system(cfg, p, sched);
    inputs = ls.inputs;
    report = eval::eval_suite(pipeline::as_sr_model(ls.sys), items, cutoffs, ec);
    const auto& probe = items.front().hr;
    report.rtf.push_back(eval::rtf_measure([&] { pipeline::super_resolve(ls.sys, probe); },
                                           probe.duration_seconds(), cfg.eval.rtf_repeats, 1,
                                           ls.nfe));
  } else {
    throw InvalidArgument("evaluate: --model must be identity or flashsr");
  }
  const auto stem = stem_for("evaluate", static_cast<long>(items.size()), cfg);
  const fs::path csv = fs::path(o.out_dir) / (stem + ".csv");
  const fs::path json = fs::path(o.out_dir) / (stem + ".json");
  report.write_csv(csv);
  report.write_json(json);
  write_manifest(o.out_dir, stem, "evaluate", cfg, inputs, {{"csv", csv}, {"json", json}},
                 {{"model", p.model}});
  for (const auto& a : report.aggregates) {
    std::cout << "cutoff " << a.cutoff_hz << " Hz: LSD " << a.lsd << ", STFT-D " << a.stft_d
              << " (" << a.count << " items)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flashsr: one-step latent diffusion audio super-resolution"};
  app.require_subcommand(1);
  Common o;
  Paths p;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "INI run configuration");
    sub->add_option("--profile", o.profile, "desk or paper (overrides the config file)");
    sub->add_option("--seed", o.seed, "Run seed");
    sub->add_option("--out-dir", o.out_dir, "Directory for every artifact")->capture_default_str();
    sub->add_option("--device", o.device, "Compute device (cpu)")->capture_default_str();
    sub->add_option("--steps", o.steps, "Override the command's step or epoch count");
    sub->add_option("--data-dir", o.data_dir, "Directory of full-band WAV clips");
  };
  std::vector<std::pair<CLI::App*, std::function<int(const Common&, const Paths&)>>> commands;
  auto add = [&](const std::string& name, const std::string& help,
                 std::function<int(const Common&, const Paths&)> fn) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    commands.emplace_back(sub, std::move(fn));
    return sub;
  };

  auto* synth = add("synth-corpus", "Write a synthetic full-band corpus", cmd_synth_corpus);
  synth->add_option("--count", p.count, "Number of clips")->capture_default_str();
  synth->add_option("--seconds", p.seconds, "Clip length")->capture_default_str();

  auto* sim = add("simulate-lr", "Lowpass-filter a directory of WAVs", cmd_simulate_lr);
  sim->add_option("--in-dir", p.in_dir, "Input directory")->required();

  add("train-codec", "Train the mel VAE", cmd_train_codec);
  auto* teach = add("train-teacher", "Train the conditional teacher denoiser", cmd_train_teacher);
  teach->add_option("--codec", p.codec, "Codec checkpoint");
  auto* dist = add("distill", "Distill a one-step LoRA student", cmd_distill);
  dist->add_option("--codec", p.codec, "Codec checkpoint");
  dist->add_option("--teacher", p.teacher, "Teacher checkpoint");
  add("train-vocoder", "Train the SR vocoder", cmd_train_vocoder);

  auto add_system = [&](CLI::App* sub) {
    sub->add_option("--codec", p.codec, "Codec checkpoint");
    sub->add_option("--student", p.student, "Student checkpoint");
    sub->add_option("--vocoder", p.vocoder, "Vocoder checkpoint");
    sub->add_option("--teacher", p.teacher, "Teacher checkpoint (with --teacher-steps)");
    sub->add_option("--teacher-steps", p.nfe, "Sample with the teacher instead of the student");
  };
  auto* infer = add("infer", "Super-resolve one WAV file", cmd_infer);
  add_system(infer);
  infer->add_option("--input", p.input, "Input WAV")->required();
  infer->add_option("--output", p.output, "Output WAV");
  auto* evaluate = add("evaluate", "Score a model over scaled cutoffs", cmd_evaluate);
  add_system(evaluate);
  evaluate->add_option("--model", p.model, "identity or flashsr")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (auto& [sub, fn] : commands) {
      if (sub->parsed()) {
        fs::create_directories(o.out_dir);
        return fn(o, p);
      }
    }
  } catch (const MissingCheckpoint& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissingCheckpoint;
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
