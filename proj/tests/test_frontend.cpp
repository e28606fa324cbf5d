#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "dota/fft.hpp"
#include "dota/frontend.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dota;

namespace {

std::vector<float> noise(std::size_t n, double amp, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> w(n);
  for (auto& x : w) x = static_cast<float>(amp * rng.normal());
  return w;
}

}  // namespace

TEST(Fft, MatchesDirectDft) {
  Rng rng(1);
  for (std::size_t n : {1u, 2u, 8u, 64u, 512u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    auto y = x;
    Fft(n).forward(y);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> s = 0;
      for (std::size_t t = 0; t < n; ++t) s += x[t] * std::polar(1.0, -2.0 * M_PI * double(k * t % n) / double(n));
      EXPECT_LT(std::abs(s - y[k]), 1e-9 * (1.0 + std::abs(s)));
    }
    Fft(n).inverse(y);
    for (std::size_t k = 0; k < n; ++k) EXPECT_LT(std::abs(y[k] - x[k]), 1e-12);
  }
  EXPECT_THROW(Fft(12), Error);
}

TEST(Fft, ConvolutionMatchesDirect) {
  const std::vector<double> a{1, 2, 3, -1}, b{0.5, -2, 4};
  const auto c = fft_convolve(a, b);
  ASSERT_EQ(c.size(), 6u);
  for (std::size_t n = 0; n < c.size(); ++n) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (n >= i && n - i < b.size()) s += a[i] * b[n - i];
    EXPECT_NEAR(c[n], s, 1e-12);
  }
}

TEST(Filterbank, MatchesExplicitTrianglesAndHasNoHoles) {
  const auto fb = mel::filterbank(16000, 512, 80, 0.0, 8000.0);
  const auto ref = oracle::mel_filters(16000, 512, 80, 0.0, 8000.0);
  ASSERT_EQ(fb.rows(), 80);
  ASSERT_EQ(fb.cols(), 257);
  EXPECT_LE((fb - ref).cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index m = 0; m < fb.rows(); ++m) EXPECT_GT(fb.row(m).sum(), 0.0) << "empty filter " << m;
  EXPECT_NEAR(mel::hz_to_mel(1000.0), 15.0, 1e-12);
  EXPECT_NEAR(mel::mel_to_hz(mel::hz_to_mel(4321.0)), 4321.0, 1e-9);
}

TEST(Frontend, LogMelMatchesDirectDftOracle) {
  FrontendConfig cfg;
  cfg.instance_samples = 16000;
  const Frontend fe(cfg);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    auto w = noise(16000, 0.05 * static_cast<double>(seed + 1), seed);
    const auto tone = fixtures::sine(440.0 * static_cast<double>(seed + 1), 1.0, 0.3);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += tone[i];
    const auto got = fe.log_mel(w);
    const auto ref = oracle::log_mel(w);
    ASSERT_EQ(got.rows(), 100);
    for (Eigen::Index i = 0; i < got.size(); ++i)
      ASSERT_LE(std::abs(got.data()[i] - ref.data()[i]), 1e-4 * std::max(1.0, std::abs(ref.data()[i]))) << i;
  }
}

TEST(Frontend, ShapesAndStacking) {
  const Frontend fe;
  const auto m = fe.features(noise(1000, 0.1, 3));
  EXPECT_EQ(m.rows(), 3000);
  EXPECT_EQ(m.cols(), 80);
  const std::size_t expect[] = {750, 375, 250};
  const std::size_t ks[] = {4, 8, 12};
  for (int i = 0; i < 3; ++i) {
    const auto s = stack_frames(m, ks[i]);
    EXPECT_EQ(static_cast<std::size_t>(s.rows()), expect[i]);
    EXPECT_EQ(static_cast<std::size_t>(s.cols()), 80 * ks[i]);
    EXPECT_EQ(unstack_frames(s, ks[i]), m);
  }
  EXPECT_THROW(stack_frames(m, 7), ShapeError);
}

TEST(Frontend, StackingIsRowConcatenation) {
  MelFeatures m(6, 2);
  m << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
  const auto s = stack_frames(m, 3);
  ASSERT_EQ(s.rows(), 2);
  for (Eigen::Index r = 0; r < 2; ++r)
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(s.block(r, 2 * j, 1, 2), m.row(3 * r + j));
}

TEST(Frontend, SilenceIsLogFloor) {
  FrontendConfig cfg;
  cfg.normalize = false;
  const auto m = Frontend(cfg).features(std::vector<float>(48000, 0.0f));
  EXPECT_EQ(m.rows(), 3000);
  EXPECT_TRUE((m.array() == static_cast<float>(std::log(1e-10))).all());
}

TEST(Frontend, FramesFollowHopArithmetic) {
  const Frontend fe;
  EXPECT_EQ(fe.log_mel(std::vector<float>(159, 0.1f)).rows(), 0);
  EXPECT_EQ(fe.log_mel(std::vector<float>(160, 0.1f)).rows(), 1);
  EXPECT_EQ(fe.log_mel(std::vector<float>(480000, 0.1f)).rows(), 3000);
}

TEST(Frontend, ScalingBoundsAndOrder) {
  const Frontend fe;
  const auto m = fe.features(noise(32000, 0.2, 9));
  EXPECT_FLOAT_EQ(m.maxCoeff(), 1.0f);
  EXPECT_GE(m.minCoeff(), -1.0f);
  FrontendConfig raw_cfg;
  raw_cfg.normalize = false;
  auto raw = Frontend(raw_cfg).features(noise(32000, 0.2, 9));
  Frontend::scale_features(raw, 8.0);
  EXPECT_EQ(raw, m);
}

TEST(Frontend, PadOrTruncate) {
  std::vector<float> w(10, 1.0f);
  EXPECT_EQ(pad_or_truncate(w, 4).size(), 4u);
  const auto p = pad_or_truncate(w, 12);
  EXPECT_EQ(p[9], 1.0f);
  EXPECT_EQ(p[10], 0.0f);
}

TEST(Frontend, DominantBinForTone) {
  FrontendConfig cfg;
  cfg.normalize = false;
  const Frontend fe(cfg);
  const auto m = fe.log_mel(fixtures::sine(1000.0, 0.5));
  Eigen::Index best = 0;
  m.row(10).maxCoeff(&best);
  const auto& fb = fe.filters();
  Eigen::Index peak_bin = 0;
  fb.row(best).maxCoeff(&peak_bin);
  EXPECT_NEAR(static_cast<double>(peak_bin) * 16000.0 / 512.0, 1000.0, 200.0);
}
