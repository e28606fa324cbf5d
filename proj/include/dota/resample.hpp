#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "dota/common.hpp"

namespace dota {

/// Polyphase windowed-sinc resampler between two integer sample rates.
///
/// Each output sample is a 32-tap dot product with a Kaiser-windowed sinc
/// centred on the output instant, expressed in input-sample units. The
/// cutoff is the lower of the two Nyquist frequencies, so downsampling is
/// anti-aliased. Output length is round(in_len * out_rate / in_rate).
class Resampler {
 public:
  static constexpr int kTaps = 32;
  static constexpr int kHalfTaps = kTaps / 2;
  static constexpr double kBeta = 8.0;

  Resampler(int in_rate, int out_rate) : in_rate_(in_rate), out_rate_(out_rate) {
    if (in_rate <= 0 || out_rate <= 0) throw Error("Resampler: rates must be positive");
    const int g = std::gcd(in_rate, out_rate);
    in_step_ = in_rate / g;
    phases_ = out_rate / g;
    cutoff_ = std::min(1.0, static_cast<double>(out_rate) / in_rate);
    table_.resize(static_cast<std::size_t>(phases_) * kTaps);
    for (int p = 0; p < phases_; ++p) {
      const double frac = static_cast<double>(p) / phases_;
      for (int t = 0; t < kTaps; ++t) {
        // tap t reads input sample floor(tau) - (kHalfTaps - 1) + t
        const double dist = frac + (kHalfTaps - 1) - t;
        table_[static_cast<std::size_t>(p) * kTaps + t] = static_cast<float>(kernel(dist));
      }
    }
  }

  int in_rate() const { return in_rate_; }
  int out_rate() const { return out_rate_; }

  std::size_t output_length(std::size_t in_len) const {
    // round-half-up of in_len * out / in in exact integer arithmetic
    const auto num = static_cast<unsigned __int128>(in_len) * static_cast<unsigned>(out_rate_);
    return static_cast<std::size_t>((2 * num + static_cast<unsigned>(in_rate_)) / (2 * static_cast<unsigned>(in_rate_)));
  }

  std::vector<float> operator()(std::span<const float> in) const {
    std::vector<float> out(output_length(in.size()));
    if (in_rate_ == out_rate_) {
      std::copy(in.begin(), in.end(), out.begin());
      return out;
    }
    const auto n_in = static_cast<std::int64_t>(in.size());
    for (std::size_t n = 0; n < out.size(); ++n) {
      const auto num = static_cast<std::int64_t>(n) * in_step_;
      const std::int64_t base = num / phases_;
      const auto phase = static_cast<std::size_t>(num % phases_);
      const float* h = table_.data() + phase * kTaps;
      const std::int64_t first = base - (kHalfTaps - 1);
      double acc = 0.0;
      if (first >= 0 && first + kTaps <= n_in) {
        const float* x = in.data() + first;
        for (int t = 0; t < kTaps; ++t) acc += static_cast<double>(h[t]) * x[t];
      } else {
        for (int t = 0; t < kTaps; ++t) {
          const std::int64_t k = first + t;
          if (k >= 0 && k < n_in) acc += static_cast<double>(h[t]) * in[static_cast<std::size_t>(k)];
        }
      }
      out[n] = static_cast<float>(acc);
    }
    return out;
  }

  /// Modified Bessel function of the first kind, order zero (power series).
  static double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    const double q = 0.25 * x * x;
    for (int k = 1; k < 64; ++k) {
      term *= q / (static_cast<double>(k) * k);
      sum += term;
      if (term < 1e-17 * sum) break;
    }
    return sum;
  }

 private:
  double kernel(double dist) const {
    const double x = dist / kHalfTaps;
    if (std::abs(x) > 1.0) return 0.0;
    const double arg = M_PI * cutoff_ * dist;
    const double sinc = dist == 0.0 ? 1.0 : std::sin(arg) / arg;
    const double window = bessel_i0(kBeta * std::sqrt(1.0 - x * x)) / bessel_i0(kBeta);
    return cutoff_ * sinc * window;
  }

  int in_rate_;
  int out_rate_;
  std::int64_t in_step_ = 1;
  std::int64_t phases_ = 1;
  double cutoff_ = 1.0;
  std::vector<float> table_;
};

inline std::vector<float> resample(std::span<const float> in, int in_rate, int out_rate) {
  return Resampler(in_rate, out_rate)(in);
}

}  // namespace dota
