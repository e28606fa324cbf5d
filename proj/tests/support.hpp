#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dota/archive.hpp"
#include "dota/config.hpp"
#include "dota/vocab.hpp"

namespace dota::fixtures {

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(DOTA_TEST_DATA) / name; }

inline Vocabulary toy_vocab() { return Vocabulary::load(data_path("toy_vocab.txt")); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("dota-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<float> sine(double freq, double seconds, double amp = 0.5, int rate = kSampleRate) {
  std::vector<float> w(static_cast<std::size_t>(std::lround(seconds * rate)));
  for (std::size_t n = 0; n < w.size(); ++n)
    w[n] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(n) / rate));
  return w;
}

/// One 0.2 s harmonic tone per digit followed by 0.05 s of silence. Digit d
/// has fundamental 150 + 45 d Hz and six equal-amplitude harmonics.
inline std::vector<float> digit_tones(const std::vector<int>& digits) {
  constexpr int kHarmonics = 6;
  std::vector<float> w;
  for (int d : digits) {
    std::vector<float> tone(3200, 0.0f);
    for (int h = 1; h <= kHarmonics; ++h) {
      const auto part = sine((150.0 + 45.0 * d) * h, 0.2, 0.4 / kHarmonics);
      for (std::size_t i = 0; i < tone.size(); ++i) tone[i] += part[i];
    }
    w.insert(w.end(), tone.begin(), tone.end());
    w.insert(w.end(), 800, 0.0f);
  }
  return w;
}

struct ToyUtterance {
  std::vector<float> audio;
  std::string transcript;
};

/// `n` digit strings of 2 to 4 digits with their tone renderings. No two
/// strings share a digit multiset, so each utterance is also identifiable
/// from its pooled spectrum.
inline std::vector<ToyUtterance> toy_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ToyUtterance> out;
  std::vector<std::string> seen;  // sorted digits
  while (out.size() < n) {
    const std::size_t len = 2 + rng.below(3);
    std::vector<int> digits(len);
    std::string text;
    for (auto& d : digits) {
      d = static_cast<int>(rng.below(10));
      text += std::to_string(d);
    }
    std::string key = text;
    std::sort(key.begin(), key.end());
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    out.push_back({digit_tones(digits), text});
  }
  return out;
}

inline ArchiveIndex write_toy_archive(const std::vector<ToyUtterance>& corpus, const std::filesystem::path& path,
                                      const std::string& dataset = "toy-digits") {
  ArchiveWriter w;
  for (const auto& u : corpus) w.add(Record{to_pcm16(u.audio), u.transcript, dataset});
  return w.write(path);
}

}  // namespace dota::fixtures
