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

#include <gtest/gtest.h>

#include <fstream>

#include "flashsr/cli/config.hpp"
#include "scratch.hpp"

namespace flashsr::cli {
namespace {

TEST(Config, ProfilesValidate) {
  for (auto p : {Profile::kDesk, Profile::kPaper}) {
    const auto c = RunConfig::for_profile(p);
    EXPECT_NO_THROW(c.validate()) << to_string(p);
    EXPECT_EQ(c.profile, p);
  }
  const auto paper = RunConfig::for_profile(Profile::kPaper);
  EXPECT_EQ(paper.mel.sample_rate, 48000);
  EXPECT_EQ(paper.mel.n_mels, 256);
  EXPECT_EQ(paper.mel.hop, 480);
  EXPECT_EQ(paper.mel.window_size, 2048);
  EXPECT_EQ(paper.lora.rank, 8);
  EXPECT_EQ(paper.distill.omega, 4.0);
  const auto desk = RunConfig::for_profile(Profile::kDesk);
  EXPECT_EQ(desk.mel.sample_rate, 16000);
  EXPECT_EQ(desk.mel.n_mels, 64);
  EXPECT_EQ(parse_profile("paper"), Profile::kPaper);
  EXPECT_THROW(parse_profile("huge"), ConfigError);
}

TEST(Config, IniRoundTripIsExact) {
  for (auto p : {Profile::kDesk, Profile::kPaper}) {
    const auto c = RunConfig::for_profile(p);
    const auto back = RunConfig::from_ini(c.to_ini());
    EXPECT_EQ(back.to_ini(), c.to_ini());
    EXPECT_EQ(back.hash(), c.hash());
  }
}

TEST(Config, OverridesApplyOnTopOfProfile) {
  const auto c = RunConfig::from_ini("[run]\nseed = 7\n[teacher]\nsteps = 12\n"
                                     "[lowpass]\nfamilies = butterworth,bessel\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.teacher_train.steps, 12);
  EXPECT_EQ(c.teacher_train.seed, 7u);
  EXPECT_EQ(c.vocoder_train.seed, 7u);
  EXPECT_EQ(c.lowpass.families.size(), 2u);
  EXPECT_EQ(c.mel.sample_rate, 16000);
  // An explicit profile argument wins over the file.
  const auto p = RunConfig::from_ini("[run]\nprofile = desk\n", Profile::kPaper);
  EXPECT_EQ(p.profile, Profile::kPaper);
  EXPECT_EQ(p.mel.sample_rate, 48000);
}

void expect_error(const std::string& ini, const std::string& prefix) {
  try {
    RunConfig::from_ini(ini);
    ADD_FAILURE() << "accepted: " << ini;
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind(prefix, 0), 0u) << e.what();
  }
}

TEST(Config, RejectsBadInput) {
  expect_error("[teacher]\nstep = 3\n", "teacher.step");
  expect_error("[nope]\nx = 1\n", "nope.x");
  expect_error("[teacher]\nsteps = many\n", "teacher.steps");
  expect_error("[distill]\nsolver = euler\n", "distill.solver");
  expect_error("[run]\ndevice = cuda\n", "run.device");
  expect_error("[codec]\ncompression = 3\n", "codec");
  expect_error("[vocoder]\nupsample_rates = 5,4,4\n", "vocoder.upsample_rates");
  expect_error("[distill]\nomega = -1\n", "distill");
  expect_error("[run]\nprofile = big\n", "run.profile");
  expect_error("[run\nseed=1\n", "config: line");
}

TEST(Config, HashIsSha1OfIni) {
  const auto a = RunConfig::for_profile(Profile::kDesk);
  auto b = a;
  EXPECT_EQ(a.hash().size(), 40u);
  EXPECT_EQ(a.hash(), b.hash());
  b.seed = 1;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, LoadFromFile) {
  const auto path = testing::scratch_dir("config") / "run.ini";
  std::ofstream(path) << "[run]\nseed = 3\n";
  EXPECT_EQ(RunConfig::load(path).seed, 3u);
  EXPECT_THROW(RunConfig::load(path.parent_path() / "missing.ini"), ConfigError);
}

}  // namespace
}  // namespace flashsr::cli
