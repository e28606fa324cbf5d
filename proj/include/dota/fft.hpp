#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "dota/common.hpp"

namespace dota {

/// In-place iterative radix-2 FFT over a fixed power-of-two size.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    if (n == 0 || !std::has_single_bit(n)) throw Error("Fft: size must be a power of two");
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k)
      twiddle_[k] = std::polar(1.0, -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n));
    rev_.resize(n);
    const int bits = std::countr_zero(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      rev_[i] = r;
    }
  }

  std::size_t size() const { return n_; }

  void forward(std::span<std::complex<double>> x) const { transform(x, false); }

  /// Inverse transform, scaled by 1/n.
  void inverse(std::span<std::complex<double>> x) const {
    transform(x, true);
    const double s = 1.0 / static_cast<double>(n_);
    for (auto& v : x) v *= s;
  }

 private:
  void transform(std::span<std::complex<double>> x, bool inv) const {
    if (x.size() != n_) throw ShapeError("Fft: input length mismatch");
    for (std::size_t i = 0; i < n_; ++i)
      if (i < rev_[i]) std::swap(x[i], x[rev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2, stride = n_ / len;
      for (std::size_t i = 0; i < n_; i += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const auto w = inv ? std::conj(twiddle_[j * stride]) : twiddle_[j * stride];
          const auto t = w * x[i + j + half];
          x[i + j + half] = x[i + j] - t;
          x[i + j] += t;
        }
      }
    }
  }

  std::size_t n_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> rev_;
};

/// Linear convolution of two real sequences through zero-padded FFTs.
inline std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const Fft fft(std::bit_ceil(out_len));
  std::vector<std::complex<double>> fa(fft.size()), fb(fft.size());
  std::copy(a.begin(), a.end(), fa.begin());
  std::copy(b.begin(), b.end(), fb.begin());
  fft.forward(fa);
  fft.forward(fb);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  fft.inverse(fa);
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real();
  return out;
}

}  // namespace dota
