#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "dota/common.hpp"

namespace dota {

/// Mono audio in [-1, 1] with its sample rate.
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

inline float pcm16_to_float(std::int16_t s) { return static_cast<float>(s) / 32768.0f; }

inline std::int16_t float_to_pcm16(float x) {
  const float scaled = std::round(x * 32768.0f);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0f, 32767.0f));
}

inline std::vector<std::int16_t> to_pcm16(std::span<const float> x) {
  std::vector<std::int16_t> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), float_to_pcm16);
  return out;
}

inline std::vector<float> from_pcm16(std::span<const std::int16_t> x) {
  std::vector<float> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), pcm16_to_float);
  return out;
}

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    throw IoError("short read on " + path.string());
  return bytes;
}

}  // namespace detail

/// Decodes a RIFF/WAVE byte buffer. Integer PCM (8/16/24/32 bit) and IEEE
/// float (32/64 bit) are supported, including WAVE_FORMAT_EXTENSIBLE.
/// Multi-channel audio is downmixed by averaging channels.
inline Waveform decode_wav(std::span<const std::uint8_t> b) {
  auto need = [&](std::size_t off, std::size_t n) {
    if (off + n > b.size()) throw FormatError("wav: truncated file");
  };
  need(0, 12);
  if (std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw FormatError("wav: missing RIFF/WAVE header");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= b.size()) {
    const auto chunk_len = le::get<std::uint32_t>(b.data() + off + 4);
    const std::size_t body = off + 8;
    if (std::memcmp(b.data() + off, "fmt ", 4) == 0) {
      need(body, 16);
      format = le::get<std::uint16_t>(b.data() + body);
      channels = le::get<std::uint16_t>(b.data() + body + 2);
      rate = le::get<std::uint32_t>(b.data() + body + 4);
      bits = le::get<std::uint16_t>(b.data() + body + 14);
      if (format == 0xFFFE) {
        need(body, 26);
        format = le::get<std::uint16_t>(b.data() + body + 24);
      }
    } else if (std::memcmp(b.data() + off, "data", 4) == 0) {
      data = b.data() + body;
      // Streams written without a final length are common; clamp to the file.
      data_len = std::min<std::size_t>(chunk_len, b.size() - body);
    }
    off = body + chunk_len + (chunk_len & 1u);
  }
  if (channels == 0 || rate == 0) throw FormatError("wav: missing or invalid fmt chunk");
  if (data == nullptr) throw FormatError("wav: missing data chunk");

  const bool is_float = format == 3;
  if (!(format == 1 || is_float)) throw FormatError("wav: unsupported format tag " + std::to_string(format));
  if (is_float ? !(bits == 32 || bits == 64) : !(bits == 8 || bits == 16 || bits == 24 || bits == 32))
    throw FormatError("wav: unsupported bit depth " + std::to_string(bits));

  const std::size_t width = bits / 8;
  const std::size_t frame = width * channels;
  const std::size_t n = data_len / frame;

  auto sample_at = [&](const std::uint8_t* p) -> double {
    if (is_float) return bits == 32 ? le::get<float>(p) : le::get<double>(p);
    switch (bits) {
      case 8: return (static_cast<int>(*p) - 128) / 128.0;
      case 16: return le::get<std::int16_t>(p) / 32768.0;
      case 24: {
        std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
        if (v & 0x800000) v -= 0x1000000;
        return v / 8388608.0;
      }
      default: return le::get<std::int32_t>(p) / 2147483648.0;
    }
  };

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += sample_at(data + i * frame + c * width);
    w.samples[i] = static_cast<float>(acc / channels);
  }
  return w;
}

inline Waveform read_wav(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  try {
    return decode_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Writes 16-bit mono PCM.
inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  const auto pcm = to_pcm16(w.samples);
  const auto data_len = static_cast<std::uint32_t>(pcm.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  auto tag = [&](const char* s) { out.insert(out.end(), s, s + 4); };
  tag("RIFF");
  le::put<std::uint32_t>(out, 36 + data_len);
  tag("WAVE");
  tag("fmt ");
  le::put<std::uint32_t>(out, 16);
  le::put<std::uint16_t>(out, 1);
  le::put<std::uint16_t>(out, 1);
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  le::put<std::uint16_t>(out, 2);
  le::put<std::uint16_t>(out, 16);
  tag("data");
  le::put<std::uint32_t>(out, data_len);
  for (auto s : pcm) le::put<std::int16_t>(out, s);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace dota
