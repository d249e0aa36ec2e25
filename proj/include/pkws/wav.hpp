// Copyright 2026 The pkws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pkws/common.hpp"

namespace pkws {

/// Mono waveform, samples in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

namespace wavdetail {

inline uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline void write_u16(std::ostream& os, uint16_t v) {
  const uint8_t b[2] = {static_cast<uint8_t>(v & 0xff),
                        static_cast<uint8_t>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}
inline void write_u32(std::ostream& os, uint32_t v) {
  const uint8_t b[4] = {static_cast<uint8_t>(v & 0xff),
                        static_cast<uint8_t>((v >> 8) & 0xff),
                        static_cast<uint8_t>((v >> 16) & 0xff),
                        static_cast<uint8_t>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace wavdetail

/// Reads a mono 16-bit PCM RIFF/WAVE file. Samples are scaled to [-1, 1]
/// by dividing by 32768. Anything else (stereo, compressed, float,
/// truncated) is rejected with a description of what was found.
inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("read_wav: cannot open " + path);

  uint8_t hdr[12];
  if (!in.read(reinterpret_cast<char*>(hdr), 12))
    throw_data("read_wav: " + path + ": file shorter than a RIFF header");
  if (std::memcmp(hdr, "RIFF", 4) != 0 || std::memcmp(hdr + 8, "WAVE", 4) != 0)
    throw_data("read_wav: " + path + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  uint16_t format_tag = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  std::vector<uint8_t> pcm;
  bool have_data = false;

  uint8_t chdr[8];
  while (in.read(reinterpret_cast<char*>(chdr), 8)) {
    const uint32_t size = wavdetail::read_u32(chdr + 4);
    if (std::memcmp(chdr, "fmt ", 4) == 0) {
      if (size < 16)
        throw_data("read_wav: " + path + ": fmt chunk too small");
      std::vector<uint8_t> fmt(size);
      if (!in.read(reinterpret_cast<char*>(fmt.data()), size))
        throw_data("read_wav: " + path + ": truncated fmt chunk");
      format_tag = wavdetail::read_u16(fmt.data() + 0);
      channels = wavdetail::read_u16(fmt.data() + 2);
      sample_rate = wavdetail::read_u32(fmt.data() + 4);
      bits = wavdetail::read_u16(fmt.data() + 14);
      have_fmt = true;
    } else if (std::memcmp(chdr, "data", 4) == 0) {
      pcm.resize(size);
      if (!in.read(reinterpret_cast<char*>(pcm.data()), size))
        throw_data("read_wav: " + path + ": truncated data chunk");
      have_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
      continue;
    }
    if (size & 1) in.seekg(1, std::ios::cur);
  }

  if (!have_fmt) throw_data("read_wav: " + path + ": missing fmt chunk");
  if (!have_data) throw_data("read_wav: " + path + ": missing data chunk");
  if (format_tag != 1)
    throw_data("read_wav: " + path + ": format tag " +
               std::to_string(format_tag) + " (only uncompressed PCM supported)");
  if (channels != 1)
    throw_data("read_wav: " + path + ": " + std::to_string(channels) +
               " channels (only mono supported)");
  if (bits != 16)
    throw_data("read_wav: " + path + ": " + std::to_string(bits) +
               " bits per sample (only 16-bit supported)");
  if (sample_rate == 0) throw_data("read_wav: " + path + ": zero sample rate");

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  const size_t n = pcm.size() / 2;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const int16_t s = static_cast<int16_t>(wavdetail::read_u16(pcm.data() + 2 * i));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

/// Writes a mono 16-bit PCM WAV. Values are clamped to [-1, 1] and scaled
/// by 32767 so a round trip never overflows.
inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("write_wav: cannot open " + path);
  const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  wavdetail::write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  wavdetail::write_u32(out, 16);
  wavdetail::write_u16(out, 1);  // PCM
  wavdetail::write_u16(out, 1);  // mono
  wavdetail::write_u32(out, static_cast<uint32_t>(w.sample_rate));
  wavdetail::write_u32(out, static_cast<uint32_t>(w.sample_rate) * 2);
  wavdetail::write_u16(out, 2);
  wavdetail::write_u16(out, 16);
  out.write("data", 4);
  wavdetail::write_u32(out, data_bytes);
  for (double v : w.samples) {
    double c = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
    const int16_t s = static_cast<int16_t>(std::lround(c * 32767.0));
    wavdetail::write_u16(out, static_cast<uint16_t>(s));
  }
  if (!out) throw_data("write_wav: write failed for " + path);
}

}  // namespace pkws
