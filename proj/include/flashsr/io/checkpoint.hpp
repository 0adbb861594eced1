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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

#include "json.hpp"

namespace flashsr::io {

// On-disk layout:
//   8 bytes  magic "FSRCKPT\0"
//   4 bytes  format version (little endian)
//   8 bytes  header length L
//   L bytes  JSON header {kind, config, meta, tensors: [{name, dtype, shape, offset, nbytes}]}
//   blobs    raw little-endian tensor data, offsets relative to the blob start
inline constexpr char kCheckpointMagic[8] = {'F', 'S', 'R', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;          // "codec", "denoiser", "vocoder", ...
  nlohmann::json config;     // echo of the producing module's config
  nlohmann::json meta;       // free-form: step, seed, losses
  std::map<std::string, torch::Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws InvalidArgument on a bad magic, an unknown version or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Every parameter and buffer of `module`, keyed by its dotted name.
std::map<std::string, torch::Tensor> state_of(const torch::nn::Module& module);
// Copies tensors into the module by name. With `strict`, missing or
// unexpected names are errors; shapes must always match.
void load_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& tensors,
                bool strict = true);

// git-style blob hash: sha1("blob <size>\0" + bytes), lowercase hex.
std::string git_blob_hash(const std::string& bytes);
std::string git_blob_hash_file(const std::filesystem::path& path);
std::string sha1_hex(const std::string& bytes);

}  // namespace flashsr::io
