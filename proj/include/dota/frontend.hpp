#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "dota/common.hpp"
#include "dota/fft.hpp"

namespace dota {

template <class T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n_frames x n_mels log-mel matrix, or its frame-stacked reshape.
using MelFeatures = MatrixRM<float>;

struct FrontendConfig {
  int sample_rate = kSampleRate;
  std::size_t instance_samples = 480000;  // 30 s
  std::size_t win_length = 400;           // 25 ms
  std::size_t hop_length = 160;           // 10 ms
  std::size_t n_fft = 512;
  std::size_t n_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;
  bool normalize = true;
  double dynamic_range = 8.0;  // natural-log units kept below the maximum

  std::size_t n_frames() const { return instance_samples / hop_length; }
  bool operator==(const FrontendConfig&) const = default;
};

/// Zero-pads or truncates to exactly `length` samples.
inline std::vector<float> pad_or_truncate(std::span<const float> w, std::size_t length = 480000) {
  std::vector<float> out(length, 0.0f);
  std::copy_n(w.begin(), std::min(length, w.size()), out.begin());
  return out;
}

namespace mel {

// Slaney mel scale: linear below 1 kHz, logarithmic above.
inline constexpr double kLinearHzPerMel = 200.0 / 3.0;
inline constexpr double kBreakHz = 1000.0;
inline constexpr double kBreakMel = kBreakHz / kLinearHzPerMel;
inline const double kLogStep = std::log(6.4) / 27.0;

inline double hz_to_mel(double hz) {
  return hz < kBreakHz ? hz / kLinearHzPerMel : kBreakMel + std::log(hz / kBreakHz) / kLogStep;
}

inline double mel_to_hz(double m) {
  return m < kBreakMel ? m * kLinearHzPerMel : kBreakHz * std::exp(kLogStep * (m - kBreakMel));
}

/// n_mels x (n_fft/2 + 1) triangular, area-normalized filterbank.
inline MatrixRM<double> filterbank(int sample_rate, std::size_t n_fft, std::size_t n_mels, double f_min,
                                   double f_max) {
  const std::size_t n_bins = n_fft / 2 + 1;
  std::vector<double> edges(n_mels + 2);
  const double lo = hz_to_mel(f_min), hi = hz_to_mel(f_max);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  MatrixRM<double> fb = MatrixRM<double>::Zero(static_cast<Eigen::Index>(n_mels), static_cast<Eigen::Index>(n_bins));
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
    const double area = 2.0 / (r - l);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      const double w = std::max(0.0, std::min((f - l) / (c - l), (r - f) / (r - c)));
      fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = w * area;
    }
  }
  return fb;
}

}  // namespace mel

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

/// Log-mel feature extractor. Frame t covers samples [hop*t, hop*t + win);
/// there is no centering, and reads past the end see zeros.
class Frontend {
 public:
  explicit Frontend(FrontendConfig cfg = {})
      : cfg_(cfg),
        fft_(cfg.n_fft),
        window_(hann_window(cfg.win_length)),
        filters_(mel::filterbank(cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.f_min, cfg.f_max)) {
    if (cfg.win_length > cfg.n_fft) throw Error("Frontend: window longer than FFT size");
    if (cfg.hop_length == 0 || cfg.n_mels == 0) throw Error("Frontend: invalid hop or mel count");
  }

  const FrontendConfig& config() const { return cfg_; }
  const MatrixRM<double>& filters() const { return filters_; }

  /// Power spectrum |X_k|^2 of one windowed frame starting at `offset`.
  Eigen::VectorXd power_spectrum(std::span<const float> w, std::size_t offset) const {
    std::vector<std::complex<double>> buf(cfg_.n_fft);
    for (std::size_t i = 0; i < cfg_.win_length; ++i) {
      const std::size_t s = offset + i;
      buf[i] = s < w.size() ? window_[i] * static_cast<double>(w[s]) : 0.0;
    }
    fft_.forward(buf);
    Eigen::VectorXd p(static_cast<Eigen::Index>(cfg_.n_fft / 2 + 1));
    for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = std::norm(buf[static_cast<std::size_t>(k)]);
    return p;
  }

  /// Mel energies (before the log) for frames covering `n_frames` hops.
  MatrixRM<double> mel_energies(std::span<const float> w, std::size_t n_frames) const {
    MatrixRM<double> out(static_cast<Eigen::Index>(n_frames), static_cast<Eigen::Index>(cfg_.n_mels));
    for (std::size_t t = 0; t < n_frames; ++t)
      out.row(static_cast<Eigen::Index>(t)) = (filters_ * power_spectrum(w, t * cfg_.hop_length)).transpose();
    return out;
  }

  /// Natural-log mel spectrogram with floor; len/hop frames. No scaling.
  MelFeatures log_mel(std::span<const float> w) const {
    const std::size_t n_frames = w.size() / cfg_.hop_length;
    const MatrixRM<double> e = mel_energies(w, n_frames);
    return e.cwiseMax(cfg_.log_floor).array().log().matrix().cast<float>();
  }

  /// Full input path: pad/truncate to the instance length, log-mel, and
  /// optional per-instance scaling.
  MelFeatures features(std::span<const float> w) const {
    const auto fixed = pad_or_truncate(w, cfg_.instance_samples);
    MelFeatures m = log_mel(fixed);
    if (cfg_.normalize) scale_features(m, cfg_.dynamic_range);
    return m;
  }

  /// Clamps to `range` below the maximum, then maps [max-range, max] onto
  /// [-1, 1].
  static void scale_features(MelFeatures& m, double range) {
    if (m.size() == 0) return;
    const float top = m.maxCoeff();
    const auto r = static_cast<float>(range);
    m = ((m.array() - top).cwiseMax(-r) + r / 2) / (r / 2);
  }

 private:
  FrontendConfig cfg_;
  Fft fft_;
  std::vector<double> window_;
  MatrixRM<double> filters_;
};

/// Row i of the result concatenates rows k*i .. k*i+k-1. Row-major storage
/// makes this a pure reshape.
inline MelFeatures stack_frames(const MelFeatures& m, std::size_t k) {
  if (k == 0 || m.rows() % static_cast<Eigen::Index>(k) != 0)
    throw ShapeError("stack_frames: " + std::to_string(m.rows()) + " frames not divisible by " + std::to_string(k));
  const auto kk = static_cast<Eigen::Index>(k);
  return Eigen::Map<const MelFeatures>(m.data(), m.rows() / kk, m.cols() * kk);
}

inline MelFeatures unstack_frames(const MelFeatures& s, std::size_t k) {
  if (k == 0 || s.cols() % static_cast<Eigen::Index>(k) != 0) throw ShapeError("unstack_frames: width not divisible");
  const auto kk = static_cast<Eigen::Index>(k);
  return Eigen::Map<const MelFeatures>(s.data(), s.rows() * kk, s.cols() / kk);
}

}  // namespace dota
