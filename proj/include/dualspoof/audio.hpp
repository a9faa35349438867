#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dualspoof/error.hpp"

namespace dualspoof {

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;
  std::string id;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return double(samples.size()) / sample_rate; }
};

inline double peak(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

inline double mean_square(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / double(x.size());
}

inline double rms(const std::vector<double>& x) { return std::sqrt(mean_square(x)); }

// Scales so that max |x| == target. All-zero input is left untouched.
inline void peak_normalize(std::vector<double>& x, double target) {
  const double p = peak(x);
  if (p == 0.0) return;
  const double g = target / p;
  for (auto& v : x) v *= g;
}

// Divides by the peak only when it exceeds 1.
inline void limit_peak(std::vector<double>& x) {
  const double p = peak(x);
  if (p > 1.0) {
    for (auto& v : x) v /= p;
  }
}

// ---------------------------------------------------------------------------
// 16-bit PCM mono RIFF/WAVE.

namespace wav_detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

}  // namespace wav_detail

// Quantizes one sample. Scaling by 32768 with a clamp to the int16 range
// keeps the write/read round trip error within one LSB (1/32768).
inline std::int16_t to_pcm16(double v) {
  v = std::clamp(v, -1.0, 1.0);
  const double scaled = std::round(v * 32768.0);
  return std::int16_t(std::clamp(scaled, -32768.0, 32767.0));
}

inline std::string encode_wav(const AudioClip& clip) {
  using namespace wav_detail;
  const std::uint32_t data_bytes = std::uint32_t(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, std::uint32_t(clip.sample_rate));
  put_u32(out, std::uint32_t(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double v : clip.samples) put_u16(out, std::uint16_t(to_pcm16(v)));
  return out;
}

inline void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_wav(clip);
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline AudioClip decode_wav(const std::string& bytes, const std::string& what) {
  using namespace wav_detail;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0) {
    throw FormatError(what + ": missing RIFF chunk id");
  }
  if (std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw FormatError(what + ": RIFF form type is not WAVE");
  }
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::uint32_t size = get_u32(p + pos + 4);
    const unsigned char* body = p + pos + 8;
    if (pos + 8 + size > n) {
      throw FormatError(what + ": chunk size exceeds file length");
    }
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError(what + ": fmt chunk too short");
      format = get_u16(body);
      channels = get_u16(body + 2);
      rate = get_u32(body + 4);
      bits = get_u16(body + 14);
      if (format != 1) {
        throw FormatError(what + ": unsupported audio_format " + std::to_string(format));
      }
      if (channels != 1) {
        throw FormatError(what + ": unsupported num_channels " + std::to_string(channels));
      }
      if (bits != 16) {
        throw FormatError(what + ": unsupported bits_per_sample " + std::to_string(bits));
      }
      if (rate == 0) throw FormatError(what + ": sample_rate is zero");
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw FormatError(what + ": data chunk before fmt chunk");
      AudioClip clip;
      clip.sample_rate = int(rate);
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = double(std::int16_t(get_u16(body + 2 * i))) / 32768.0;
      }
      return clip;
    }
    pos += 8 + size + (size & 1);
  }
  throw FormatError(what + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(f), {});
}

inline AudioClip read_wav(const std::filesystem::path& path) {
  AudioClip clip = decode_wav(read_file_bytes(path), path.string());
  clip.id = path.stem().string();
  return clip;
}

}  // namespace dualspoof
