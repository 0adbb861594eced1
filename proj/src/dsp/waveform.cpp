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

#include "flashsr/dsp/waveform.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "flashsr/error.hpp"

namespace flashsr::dsp {

void Waveform::validate() const {
  if (samples.empty()) throw InvalidArgument("waveform has no samples");
  if (sample_rate <= 0) {
    throw InvalidArgument("waveform sample rate must be positive, got " +
                          std::to_string(sample_rate));
  }
  for (float s : samples) {
    if (!std::isfinite(s)) throw InvalidArgument("waveform contains non-finite samples");
  }
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open wav file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InvalidArgument(path.string() + ": not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const auto size = read_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = read_le<std::uint16_t>(chunk + 8);
      channels = read_le<std::uint16_t>(chunk + 10);
      rate = read_le<std::uint32_t>(chunk + 12);
      bits = read_le<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible && avail >= 26) {
        format = read_le<std::uint16_t>(chunk + 32);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos = body + size + (size & 1u);
  }
  if (data == nullptr || channels == 0 || rate == 0) {
    throw InvalidArgument(path.string() + ": missing fmt or data chunk");
  }

  const std::size_t width = bits / 8;
  const bool supported = (format == kFormatPcm && (bits == 16 || bits == 24 || bits == 32)) ||
                         (format == kFormatFloat && bits == 32);
  if (!supported) {
    throw InvalidArgument(path.string() + ": unsupported sample format " +
                          std::to_string(format) + "/" + std::to_string(bits) + " bit");
  }

  const std::size_t frames = data_size / (width * channels);
  Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  wave.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + (i * channels + c) * width;
      double v = 0.0;
      if (format == kFormatFloat) {
        v = read_le<float>(p);
      } else if (bits == 16) {
        v = read_le<std::int16_t>(p) / 32768.0;
      } else if (bits == 24) {
        std::int32_t x = p[0] | (p[1] << 8) | (p[2] << 16);
        if (x & 0x800000) x -= 0x1000000;
        v = x / 8388608.0;
      } else {
        v = read_le<std::int32_t>(p) / 2147483648.0;
      }
      acc += v;
    }
    wave.samples[i] = static_cast<float>(acc / channels);
  }
  return wave;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave, WavEncoding encoding) {
  if (wave.sample_rate <= 0) throw InvalidArgument("cannot write wav with non-positive rate");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");

  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.size() * (bits / 8));
  out.write("RIFF", 4);
  put_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate) * (bits / 8));
  put_le<std::uint16_t>(out, bits / 8);
  put_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  put_le<std::uint32_t>(out, data_bytes);
  for (float s : wave.samples) {
    if (pcm) {
      const double clipped = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0);
      put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(clipped * 32768.0)));
    } else {
      put_le<float>(out, s);
    }
  }
}

}  // namespace flashsr::dsp
