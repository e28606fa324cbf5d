#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <vector>

#include "dota/archive.hpp"
#include "dota/resample.hpp"
#include "dota/schedule.hpp"
#include "dota/wav.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dota;

namespace {

Record random_record(Rng& rng, const std::string& ds) {
  Record r;
  r.audio.resize(1 + rng.below(4000));
  for (auto& s : r.audio) s = static_cast<std::int16_t>(static_cast<int>(rng.below(65536)) - 32768);
  const char* words[] = {"hello", "wörld", "ünïcode", "21", "a", "speech"};
  for (std::size_t i = 0, n = 1 + rng.below(6); i < n; ++i) r.transcript += std::string(i ? " " : "") + words[rng.below(6)];
  r.dataset_id = ds;
  return r;
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) { return detail::read_file_bytes(p); }

}  // namespace

TEST(Archive, RoundTripIsBitExact) {
  fixtures::TempDir td("arc");
  Rng rng(1);
  std::vector<Record> recs;
  ArchiveWriter w;
  for (int i = 0; i < 50; ++i) {
    recs.push_back(random_record(rng, i % 3 == 0 ? "alpha" : "beta"));
    w.add(recs.back());
  }
  const auto idx = w.write(td / "a.arc");
  EXPECT_EQ(idx.size(), 50u);
  const ArchiveReader r(td / "a.arc");
  ASSERT_EQ(r.size(), 50u);
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(r.read(i), recs[i]);
  EXPECT_EQ(r.records_of("alpha").size(), 17u);
  EXPECT_EQ(r.datasets().size(), 2u);
}

TEST(Archive, HeaderLayout) {
  fixtures::TempDir td("hdr");
  ArchiveWriter w;
  w.add({{1, -2, 3}, "abc", "ds"});
  w.write(td / "h.arc");
  const auto b = file_bytes(td / "h.arc");
  ASSERT_GE(b.size(), 20u + 34u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "DOTAARC1");
  EXPECT_EQ(le::get<std::uint32_t>(b.data() + 8), 1u);
  EXPECT_EQ(le::get<std::uint64_t>(b.data() + 12), 1u);
  EXPECT_EQ(le::get<std::uint64_t>(b.data() + 20 + 8), 3u);   // audio length in samples
  EXPECT_EQ(le::get<std::uint64_t>(b.data() + 20 + 24), 3u);  // text length in bytes
  const auto audio_off = le::get<std::uint64_t>(b.data() + 20);
  EXPECT_EQ(le::get<std::int16_t>(b.data() + audio_off + 2), -2);
}

TEST(Archive, EmptyArchiveAndOutOfRange) {
  fixtures::TempDir td("empty");
  ArchiveWriter().write(td / "e.arc");
  const ArchiveReader r(td / "e.arc");
  EXPECT_EQ(r.size(), 0u);
  EXPECT_THROW(r.read(0), std::out_of_range);
  ArchiveWriter w;
  w.add({{1}, "x", "d"});
  w.write(td / "one.arc");
  EXPECT_THROW(ArchiveReader(td / "one.arc").transcript(1), std::out_of_range);
}

TEST(Archive, RejectsCorruptFilesAndRecords) {
  fixtures::TempDir td("bad");
  {
    std::ofstream f(td / "bad.arc", std::ios::binary);
    f << "NOTANARCHIVE........";
  }
  EXPECT_THROW(ArchiveReader(td / "bad.arc"), FormatError);
  ArchiveWriter w;
  w.add({{1, 2}, "fine", "d"});
  w.write(td / "trunc.arc");
  auto b = file_bytes(td / "trunc.arc");
  b.resize(b.size() - 3);
  std::ofstream(td / "trunc.arc", std::ios::binary | std::ios::trunc).write(reinterpret_cast<const char*>(b.data()), b.size());
  EXPECT_THROW(ArchiveReader(td / "trunc.arc"), FormatError);
  EXPECT_THROW(ArchiveReader(td / "missing.arc"), IoError);

  ArchiveWriter v;
  EXPECT_THROW(v.add({{}, "no audio", "d"}), Error);
  EXPECT_THROW(v.add({{1}, std::string("nul\0byte", 8), "d"}), Error);
  EXPECT_THROW(v.add({{1}, "\xff\xfe", "d"}), Error);
  EXPECT_FALSE(is_valid_utf8("\xc3"));
  EXPECT_TRUE(is_valid_utf8("ü€𝄞"));
}

TEST(Wav, RoundTripAndFormats) {
  fixtures::TempDir td("wav");
  Waveform w{fixtures::sine(440.0, 0.1), 16000};
  write_wav(td / "a.wav", w);
  const auto back = read_wav(td / "a.wav");
  EXPECT_EQ(back.sample_rate, 16000);
  EXPECT_EQ(to_pcm16(back.samples), to_pcm16(w.samples));
  EXPECT_THROW(read_wav(td / "nope.wav"), IoError);
  {
    std::ofstream f(td / "junk.wav", std::ios::binary);
    f << "RIFF\x04\x00\x00\x00WAVE";
  }
  EXPECT_THROW(read_wav(td / "junk.wav"), FormatError);
  EXPECT_EQ(float_to_pcm16(2.0f), 32767);
  EXPECT_EQ(float_to_pcm16(-2.0f), -32768);
}

TEST(Resample, MatchesWindowedSincOracle8kTo16k) {
  Rng rng(3);
  std::vector<float> x(2000);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  const auto y = resample(x, 8000, 16000);
  const auto ref = oracle::windowed_sinc_resample(x, 8000, 16000);
  ASSERT_EQ(y.size(), 4000u);
  ASSERT_EQ(ref.size(), y.size());
  for (std::size_t n = 0; n < y.size(); ++n) EXPECT_NEAR(y[n], ref[n], 2e-6) << n;
}

TEST(Resample, PreservesSinesAndLengths) {
  for (auto [in, out] : std::vector<std::pair<int, int>>{{8000, 16000}, {44100, 16000}, {22050, 16000}, {48000, 16000}}) {
    const auto x = fixtures::sine(440.0, 1.0, 0.5, in);
    const auto y = resample(x, in, out);
    EXPECT_EQ(y.size(), static_cast<std::size_t>(out));
    const auto ideal = fixtures::sine(440.0, 1.0, 0.5, out);
    double err = 0;
    for (std::size_t n = 100; n + 100 < y.size(); ++n) err = std::max(err, std::abs(double(y[n]) - ideal[n]));
    EXPECT_LT(err, 5e-3) << in;
  }
  const std::vector<float> same{0.1f, -0.2f, 0.3f};
  EXPECT_EQ(resample(same, 16000, 16000), same);
  EXPECT_EQ(Resampler(3, 2).output_length(5), 3u);  // 3.33 rounds to 3
  EXPECT_EQ(Resampler(2, 3).output_length(5), 8u);  // 7.5 rounds half up
}

TEST(Ingest, ManifestIsDeterministicAndReportsFailures) {
  fixtures::TempDir td("ingest");
  write_wav(td / "a.wav", {fixtures::sine(300.0, 0.5, 0.3, 8000), 8000});
  write_wav(td / "b.wav", {fixtures::sine(500.0, 0.25), 16000});
  {
    std::ofstream m(td / "m.tsv");
    m << "a.wav\tHello World\tset-a\n"
      << "missing.wav\tnothing\tset-a\n"
      << td.path().string() << "/b.wav\tsecond one\tset-b\n";
  }
  const auto sources = read_manifest(td / "m.tsv");
  ASSERT_EQ(sources.size(), 3u);
  const auto r1 = ingest(sources, td / "1.arc");
  const auto r2 = ingest(sources, td / "2.arc");
  ASSERT_EQ(r1.errors.size(), 1u);
  EXPECT_EQ(r1.errors[0].source_index, 1u);
  EXPECT_EQ(file_bytes(td / "1.arc"), file_bytes(td / "2.arc"));
  const ArchiveReader r(td / "1.arc");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r.audio(0).size(), 8000u);
  EXPECT_EQ(r.transcript(0), "Hello World");
  EXPECT_EQ(r.dataset_of(1), "set-b");
  EXPECT_EQ(r.audio(1), to_pcm16(read_wav(td / "b.wav").samples));

  std::ofstream(td / "bad.tsv") << "only\ttwo\n";
  EXPECT_THROW(read_manifest(td / "bad.tsv"), FormatError);
}

TEST(Schedule, MultiplicityFollowsWeights) {
  fixtures::TempDir td("sched");
  ArchiveWriter w;
  for (int i = 0; i < 10; ++i) w.add({{1}, "x", i < 4 ? "librispeech-clean" : "small-set"});
  w.write(td / "s.arc");
  const ArchiveReader r(td / "s.arc");
  const std::vector<const ArchiveReader*> archives{&r};
  const auto plan = corpus_upsampling_plan(r.datasets(), 5);
  EXPECT_EQ(plan.weights.at("librispeech-clean"), 1);
  EXPECT_EQ(plan.weights.at("small-set"), 2);
  const auto s = epoch_schedule(plan, archives, 0);
  std::map<std::size_t, int> count;
  for (const auto& e : s) ++count[e.index];
  ASSERT_EQ(s.size(), 4u + 12u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(count[i], i < 4 ? 1 : 2);

  EXPECT_EQ(epoch_schedule(plan, archives, 0), s);
  EXPECT_NE(epoch_schedule(plan, archives, 1), s);
  SamplingPlan bad = plan;
  bad.weights["no-such-set"] = 1;
  EXPECT_THROW(epoch_schedule(bad, archives), Error);
  bad = plan;
  bad.weights["small-set"] = 0;
  EXPECT_THROW(epoch_schedule(bad, archives), Error);
}

TEST(Rng, DeterministicAndInRange) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(7);
  double sum = 0;
  for (int i = 0; i < 10000; ++i) {
    const double u = c.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    ASSERT_LT(c.below(7), 7u);
  }
  EXPECT_NEAR(sum / 10000, 0.5, 0.02);
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
}
