// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cse/error.hpp"

namespace cse {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 8000;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

inline void validate_waveform(const Waveform& w, const std::string& who) {
  check_arg(w.sample_rate > 0, who + ": sample_rate must be positive");
  for (float v : w.samples)
    check(std::isfinite(v), ErrorCode::kInvalidArgument, who + ": non-finite sample");
}

namespace wavio {

inline void put_u32(std::string& s, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  s.append(b, 4);
}
inline void put_u16(std::string& s, uint16_t v) {
  char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
  s.append(b, 2);
}

inline uint32_t get_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
inline uint16_t get_u16(const unsigned char* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

}  // namespace wavio

enum class WavEncoding { kPcm16, kFloat32 };

// Mono RIFF writer. PCM 16-bit or IEEE float32.
inline void write_wav(const std::string& path, const Waveform& w,
                      WavEncoding enc = WavEncoding::kPcm16) {
  using namespace wavio;
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint16_t bytes_per = enc == WavEncoding::kPcm16 ? 2 : 4;
  const uint32_t data_bytes = n * bytes_per;

  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  put_u32(out, 36 + data_bytes);
  out.append("WAVE");
  out.append("fmt ");
  put_u32(out, 16);
  put_u16(out, enc == WavEncoding::kPcm16 ? 1 : 3);  // PCM / IEEE float
  put_u16(out, 1);                                   // mono
  put_u32(out, static_cast<uint32_t>(w.sample_rate));
  put_u32(out, static_cast<uint32_t>(w.sample_rate) * bytes_per);
  put_u16(out, bytes_per);
  put_u16(out, bytes_per * 8);
  out.append("data");
  put_u32(out, data_bytes);

  for (float v : w.samples) {
    if (enc == WavEncoding::kPcm16) {
      float c = v < -1.f ? -1.f : (v > 1.f ? 1.f : v);
      int s = static_cast<int>(std::lrint(c * 32767.f));
      put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(s)));
    } else {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), ErrorCode::kIo, "cannot open for write: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  check(f.good(), ErrorCode::kIo, "write failed: " + path);
}

// Mono RIFF reader; accepts PCM16 and float32, rejects anything else.
inline Waveform read_wav(const std::string& path) {
  using namespace wavio;
  std::ifstream f(path, std::ios::binary);
  check(f.good(), ErrorCode::kIo, "cannot open: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  check(buf.size() >= 44, ErrorCode::kIo, "truncated wav: " + path);
  check(std::memcmp(buf.data(), "RIFF", 4) == 0 && std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
        ErrorCode::kIo, "not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* id = reinterpret_cast<const char*>(buf.data() + pos);
    uint32_t len = get_u32(buf.data() + pos + 4);
    size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0 && body + 16 <= buf.size()) {
      format = get_u16(buf.data() + body);
      channels = get_u16(buf.data() + body + 2);
      rate = get_u32(buf.data() + body + 4);
      bits = get_u16(buf.data() + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<size_t>(len, buf.size() - body);
    }
    pos = body + len + (len & 1);
  }
  check(data_off != 0, ErrorCode::kIo, "wav has no data chunk: " + path);
  check(channels == 1, ErrorCode::kIo,
        "multi-channel wav not supported (" + std::to_string(channels) + " channels): " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    w.samples.resize(data_len / 2);
    for (size_t i = 0; i < w.samples.size(); ++i) {
      int16_t s = static_cast<int16_t>(get_u16(buf.data() + data_off + 2 * i));
      w.samples[i] = static_cast<float>(s) / 32767.f;
    }
  } else if (format == 3 && bits == 32) {
    w.samples.resize(data_len / 4);
    for (size_t i = 0; i < w.samples.size(); ++i) {
      uint32_t v = get_u32(buf.data() + data_off + 4 * i);
      float x;
      std::memcpy(&x, &v, 4);
      w.samples[i] = x;
    }
  } else {
    throw_error(ErrorCode::kIo, "unsupported wav encoding (format " + std::to_string(format) +
                                    ", " + std::to_string(bits) + " bit): " + path);
  }
  return w;
}

}  // namespace cse
