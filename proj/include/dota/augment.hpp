#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dota/common.hpp"
#include "dota/fft.hpp"
#include "dota/resample.hpp"

namespace dota {

struct AugmentConfig {
  double p_speed = 1e-3;
  double p_tempo = 0.2;
  double p_lowpass = 1e-3;
  double p_reverb = 1e-3;
  double factor_min = 0.9;
  double factor_max = 1.1;
  double p_concat = 0.25;
  double pole_min = 0.5;
  double pole_max = 0.95;
  double t60_min = 0.1;
  double t60_max = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    for (double p : {p_speed, p_tempo, p_lowpass, p_reverb, p_concat})
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augment: probabilities must lie in [0, 1]");
    if (!(factor_min > 0.0 && factor_min <= factor_max)) throw ConfigError("augment: invalid factor range");
    if (!(pole_min >= 0.0 && pole_min <= pole_max && pole_max < 1.0)) throw ConfigError("augment: invalid pole range");
    if (!(t60_min > 0.0 && t60_min <= t60_max)) throw ConfigError("augment: invalid T60 range");
  }

  /// Every stochastic transform and concatenation switched off.
  static AugmentConfig none() {
    AugmentConfig c;
    c.p_speed = c.p_tempo = c.p_lowpass = c.p_reverb = c.p_concat = 0.0;
    return c;
  }

  bool operator==(const AugmentConfig&) const = default;
};

/// Resampled playback: duration scales by 1/factor and pitch by factor.
/// The factor is quantized to 1/16000 so the resampler runs on integer rates.
inline std::vector<float> speed_perturb(std::span<const float> w, double factor, int sample_rate = kSampleRate) {
  if (!(factor > 0.0)) throw Error("speed_perturb: factor must be positive");
  const int in_rate = static_cast<int>(std::lround(sample_rate * factor));
  return resample(w, in_rate, sample_rate);
}

/// Waveform-similarity overlap-add (WSOLA) time stretch.
///
/// 30 ms Hann frames are written at a fixed 15 ms synthesis hop; each input
/// frame is taken near its nominal position `factor * output position`,
/// shifted by up to `tolerance` samples to best match the natural
/// continuation of the previous frame. Pitch is preserved.
inline std::vector<float> tempo_perturb(std::span<const float> w, double factor, int sample_rate = kSampleRate) {
  if (!(factor > 0.0)) throw Error("tempo_perturb: factor must be positive");
  const std::size_t out_len = static_cast<std::size_t>(std::llround(static_cast<double>(w.size()) / factor));
  if (w.empty() || out_len == 0) return std::vector<float>(out_len, 0.0f);

  const auto frame = static_cast<std::int64_t>(sample_rate * 30 / 1000);
  const std::int64_t hop = frame / 2;
  const auto tolerance = static_cast<std::int64_t>(sample_rate * 10 / 1000);
  const auto n_in = static_cast<std::int64_t>(w.size());
  auto at = [&](std::int64_t i) -> double { return i >= 0 && i < n_in ? w[static_cast<std::size_t>(i)] : 0.0; };

  std::vector<double> window(static_cast<std::size_t>(frame));
  for (std::int64_t i = 0; i < frame; ++i)
    window[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(frame));

  std::vector<double> acc(out_len + static_cast<std::size_t>(frame), 0.0);
  std::vector<double> wsum(acc.size(), 0.0);
  std::int64_t prev = 0;
  for (std::int64_t k = 0; k * hop < static_cast<std::int64_t>(out_len); ++k) {
    std::int64_t src = std::llround(static_cast<double>(k * hop) * factor);
    if (k > 0) {
      const std::int64_t natural = prev + hop;
      double best = -2.0;
      std::int64_t best_src = src;
      for (std::int64_t d = -tolerance; d <= tolerance; ++d) {
        const std::int64_t cand = src + d;
        double dot = 0.0, ea = 0.0, eb = 0.0;
        for (std::int64_t i = 0; i < hop; ++i) {
          const double a = at(cand + i), b = at(natural + i);
          dot += a * b;
          ea += a * a;
          eb += b * b;
        }
        const double score = (ea > 0.0 && eb > 0.0) ? dot / std::sqrt(ea * eb) : (ea == eb ? 1.0 : 0.0);
        if (score > best + 1e-12) {
          best = score;
          best_src = cand;
        }
      }
      src = best_src;
    }
    const std::size_t base = static_cast<std::size_t>(k * hop);
    for (std::int64_t i = 0; i < frame; ++i) {
      const double wi = window[static_cast<std::size_t>(i)];
      acc[base + static_cast<std::size_t>(i)] += wi * at(src + i);
      wsum[base + static_cast<std::size_t>(i)] += wi;
    }
    prev = src;
  }
  std::vector<float> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = wsum[i] > 1e-6 ? static_cast<float>(acc[i] / wsum[i]) : 0.0f;
  return out;
}

/// Single-pole low pass y[n] = a*y[n-1] + (1-a)*x[n] with unity DC gain.
inline std::vector<float> lowpass(std::span<const float> w, double pole) {
  if (!(pole >= 0.0 && pole < 1.0)) throw Error("lowpass: pole must lie in [0, 1)");
  std::vector<float> out(w.size());
  double y = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    y = pole * y + (1.0 - pole) * w[n];
    out[n] = static_cast<float>(y);
  }
  return out;
}

/// Exponentially decaying Gaussian-noise impulse response with a unit direct
/// path, scaled so that its peak magnitude is one.
inline std::vector<double> make_reverb_ir(double t60, Rng& rng, int sample_rate = kSampleRate) {
  const auto len = static_cast<std::size_t>(std::ceil(t60 * sample_rate));
  std::vector<double> ir(std::max<std::size_t>(len, 1));
  const double decay = 3.0 * std::log(10.0) / (t60 * sample_rate);  // -60 dB at t60
  ir[0] = 1.0;
  for (std::size_t n = 1; n < ir.size(); ++n) ir[n] = rng.normal() * std::exp(-decay * static_cast<double>(n));
  double peak = 0.0;
  for (double v : ir) peak = std::max(peak, std::abs(v));
  for (double& v : ir) v /= peak;
  return ir;
}

/// Convolves with `ir`, keeps the first len(w) samples and rescales the
/// result to the input's peak magnitude.
inline std::vector<float> reverb_with_ir(std::span<const float> w, std::span<const double> ir) {
  std::vector<float> out(w.size(), 0.0f);
  if (w.empty() || ir.empty()) return out;
  std::vector<double> x(w.begin(), w.end());
  std::vector<double> y;
  if (x.size() * ir.size() <= (1u << 22)) {
    y.assign(x.size(), 0.0);
    for (std::size_t n = 0; n < x.size(); ++n) {
      if (x[n] == 0.0) continue;
      const std::size_t m_end = std::min(ir.size(), x.size() - n);
      for (std::size_t m = 0; m < m_end; ++m) y[n + m] += x[n] * ir[m];
    }
  } else {
    y = fft_convolve(x, ir);
    y.resize(x.size());
  }
  double in_peak = 0.0, out_peak = 0.0;
  for (double v : x) in_peak = std::max(in_peak, std::abs(v));
  for (double v : y) out_peak = std::max(out_peak, std::abs(v));
  const double scale = out_peak > 0.0 ? in_peak / out_peak : 0.0;
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = static_cast<float>(y[n] * scale);
  return out;
}

inline std::vector<float> reverb(std::span<const float> w, Rng& rng, double t60_min = 0.1, double t60_max = 0.5,
                                 int sample_rate = kSampleRate) {
  const auto ir = make_reverb_ir(rng.uniform(t60_min, t60_max), rng, sample_rate);
  return reverb_with_ir(w, ir);
}

/// Which transforms fired for one record, for logging and tests.
struct AugmentTrace {
  bool speed = false, tempo = false, lowpass = false, reverb = false;
};

/// Applies speed, tempo, low pass and reverb in that order, each behind an
/// independent coin flip. All four coins are drawn first.
inline std::vector<float> augment_record(std::vector<float> w, const AugmentConfig& cfg, Rng& rng,
                                         AugmentTrace* trace = nullptr) {
  AugmentTrace t;
  t.speed = rng.bernoulli(cfg.p_speed);
  t.tempo = rng.bernoulli(cfg.p_tempo);
  t.lowpass = rng.bernoulli(cfg.p_lowpass);
  t.reverb = rng.bernoulli(cfg.p_reverb);
  if (t.speed) w = speed_perturb(w, rng.uniform(cfg.factor_min, cfg.factor_max));
  if (t.tempo) w = tempo_perturb(w, rng.uniform(cfg.factor_min, cfg.factor_max));
  if (t.lowpass) w = lowpass(w, rng.uniform(cfg.pole_min, cfg.pole_max));
  if (t.reverb) w = reverb(w, rng, cfg.t60_min, cfg.t60_max);
  if (trace) *trace = t;
  return w;
}

struct StreamItem {
  std::vector<float> audio;
  std::string transcript;
};

struct AssembledInstance {
  std::vector<float> audio;              // exactly the target length
  std::vector<std::string> transcripts;  // fully included records, in order
};

/// Builds one fixed-length training instance from consecutive records.
///
/// Starting from the first record, repeatedly either appends the next
/// record (probability p_concat) or zero-pads to the target, until the
/// target length is reached, then truncates. A record cut by the limit
/// contributes no transcript. `next` returns std::nullopt once exhausted,
/// which forces padding.
template <class NextFn>
AssembledInstance assemble_instance(NextFn&& next, const AugmentConfig& cfg, Rng& rng, std::size_t target = 480000,
                                    bool apply_augment = true) {
  AssembledInstance inst;
  auto take = [&](StreamItem item) {
    auto audio = apply_augment ? augment_record(std::move(item.audio), cfg, rng) : std::move(item.audio);
    if (inst.audio.size() + audio.size() <= target) inst.transcripts.push_back(std::move(item.transcript));
    inst.audio.insert(inst.audio.end(), audio.begin(), audio.end());
  };
  std::optional<StreamItem> first = next();
  if (!first) throw Error("assemble_instance: empty record stream");
  take(std::move(*first));
  while (inst.audio.size() < target) {
    if (rng.bernoulli(cfg.p_concat)) {
      if (auto item = next()) {
        take(std::move(*item));
        continue;
      }
    }
    inst.audio.resize(target, 0.0f);
  }
  inst.audio.resize(target);
  return inst;
}

}  // namespace dota
