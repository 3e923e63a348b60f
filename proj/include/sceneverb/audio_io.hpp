/*
Copyright 2025 The sceneverb Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "sceneverb/common.hpp"

namespace sceneverb {

// Interleaved-free audio buffer: one vector per channel.
struct AudioBuffer {
  double sample_rate = 48000.0;
  std::vector<std::vector<float>> channels;

  size_t length() const { return channels.empty() ? 0 : channels[0].size(); }
  int num_channels() const { return static_cast<int>(channels.size()); }
};

namespace wav_detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  s.append(b, 4);
}

inline void put_u16(std::string& s, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  s.append(b, 2);
}

inline std::uint32_t get_u32(const std::string& s, size_t off) {
  return static_cast<std::uint8_t>(s[off]) |
         (static_cast<std::uint8_t>(s[off + 1]) << 8) |
         (static_cast<std::uint8_t>(s[off + 2]) << 16) |
         (static_cast<std::uint8_t>(s[off + 3]) << 24);
}

inline std::uint16_t get_u16(const std::string& s, size_t off) {
  return static_cast<std::uint16_t>(static_cast<std::uint8_t>(s[off]) |
                                    (static_cast<std::uint8_t>(s[off + 1]) << 8));
}

}  // namespace wav_detail

// Writes 32-bit float PCM (format tag 3). Byte layout is fully determined
// by the buffer contents, so identical buffers produce identical files.
inline void write_wav(const std::string& path, const AudioBuffer& audio) {
  using namespace wav_detail;
  const int channels = std::max(1, audio.num_channels());
  const size_t frames = audio.length();
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(frames * channels * 4);

  std::string out;
  out.reserve(58 + data_bytes);
  out += "RIFF";
  put_u32(out, 4 + 26 + 8 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 18);
  put_u16(out, 3);  // IEEE float
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(audio.sample_rate) * channels * 4);
  put_u16(out, static_cast<std::uint16_t>(channels * 4));
  put_u16(out, 32);
  put_u16(out, 0);  // no extension bytes
  out += "data";
  put_u32(out, data_bytes);
  for (size_t i = 0; i < frames; ++i) {
    for (int ch = 0; ch < channels; ++ch) {
      const float v =
          ch < audio.num_channels() ? audio.channels[ch][i] : 0.0f;
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) fail("ParseError", "cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail("ParseError", "failed writing '" + path + "'");
}

inline AudioBuffer read_wav(const std::string& path) {
  using namespace wav_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("ParseError", "cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  if (data.size() < 12 || data.compare(0, 4, "RIFF") != 0 ||
      data.compare(8, 4, "WAVE") != 0) {
    fail("ParseError", "'" + path + "' is not a RIFF/WAVE file");
  }

  int channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t format = 0, bits = 0;
  size_t data_off = 0, data_len = 0;
  size_t off = 12;
  while (off + 8 <= data.size()) {
    const std::string id = data.substr(off, 4);
    const std::uint32_t len = get_u32(data, off + 4);
    const size_t body = off + 8;
    if (body + len > data.size()) {
      fail("ParseError", "'" + path + "' has a truncated chunk");
    }
    if (id == "fmt ") {
      if (len < 16) fail("ParseError", "'" + path + "' has a malformed fmt chunk");
      format = get_u16(data, body);
      channels = get_u16(data, body + 2);
      rate = get_u32(data, body + 4);
      bits = get_u16(data, body + 14);
    } else if (id == "data") {
      data_off = body;
      data_len = len;
    }
    off = body + len + (len % 2);
  }
  if (format != 3 || bits != 32) {
    fail("ParseError", "'" + path + "' must be 32-bit float PCM");
  }
  if (channels < 1 || data_off == 0) {
    fail("ParseError", "'" + path + "' is missing audio data");
  }

  AudioBuffer out;
  out.sample_rate = static_cast<double>(rate);
  const size_t frames = data_len / (static_cast<size_t>(channels) * 4);
  out.channels.assign(channels, std::vector<float>(frames));
  for (size_t i = 0; i < frames; ++i) {
    for (int ch = 0; ch < channels; ++ch) {
      const size_t pos = data_off + (i * channels + ch) * 4;
      std::uint32_t v = get_u32(data, pos);
      float s;
      std::memcpy(&s, &v, 4);
      out.channels[ch][i] = s;
    }
  }
  return out;
}

}  // namespace sceneverb
