#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dota/cli.hpp"
#include "support.hpp"

using namespace dota;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "dota");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"ingest", "--out", "x.arc"}).code, 2);
  EXPECT_EQ(run({"--preset", "huge", "normalize", "--in", "a", "--out", "b"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
  const auto missing = run({"decode", "--audio", "none.wav", "--checkpoint", "/no/such/model.ckpt"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("checkpoint not found"), std::string::npos);
}

TEST(Cli, IngestNormalizeMelspec) {
  fixtures::TempDir td("cli1");
  write_wav(td / "a.wav", {fixtures::sine(440.0, 0.5, 0.3, 8000), 8000});
  std::ofstream(td / "m.tsv") << (td / "a.wav").string() << "\tHi There 42\tset\n"
                              << (td / "gone.wav").string() << "\tlost\tset\n";
  const auto ing = run({"ingest", "--manifest", (td / "m.tsv").string(), "--out", (td / "a.arc").string()});
  EXPECT_EQ(ing.code, 0);
  EXPECT_NE(ing.err.find("gone.wav"), std::string::npos);
  const ArchiveReader ar(td / "a.arc");
  ASSERT_EQ(ar.size(), 1u);
  EXPECT_EQ(ar.audio(0).size(), 8000u);

  std::ofstream(td / "t.txt") << "Hi There 42\nSECOND, line!\n";
  EXPECT_EQ(run({"normalize", "--in", (td / "t.txt").string(), "--out", (td / "n.txt").string()}).code, 0);
  EXPECT_EQ(slurp(td / "n.txt"), "hi there 4 2\nsecond line\n");

  EXPECT_EQ(run({"melspec", "--in", (td / "a.wav").string(), "--out", (td / "m.bin").string(), "--stack", "4"}).code, 0);
  const auto m = read_features(td / "m.bin");
  EXPECT_EQ(m.rows(), 750);
  EXPECT_EQ(m.cols(), 320);
  EXPECT_FLOAT_EQ(m.maxCoeff(), 1.0f);
  const auto raw_run = run({"--preset", "toy", "melspec", "--in", (td / "a.wav").string(), "--out",
                            (td / "r.bin").string(), "--raw"});
  EXPECT_EQ(raw_run.code, 0);
  const auto raw = read_features(td / "r.bin");
  EXPECT_EQ(raw.rows(), 200);
  EXPECT_EQ(std::filesystem::file_size(td / "r.bin"), 8u + 4u * 200u * 80u);
  EXPECT_EQ(run({"melspec", "--in", (td / "a.wav").string(), "--out", (td / "x.bin").string(), "--stack", "7"}).code, 1);
}

TEST(Cli, TrainDecodeEval) {
  fixtures::TempDir td("cli2");
  fixtures::write_toy_archive(fixtures::toy_corpus(4, 1), td / "toy.arc");
  std::ofstream(td / "run.cfg") << "preset = toy\ntotal_steps = 3\nwarmup_steps = 1\nbatch_size = 2\n"
                                << "p_speed = 0\np_tempo = 0\np_lowpass = 0\np_reverb = 0\np_concat = 0\n"
                                << "checkpoint_every = 2\n";
  const auto tr = run({"--config", (td / "run.cfg").string(), "--seed", "5", "train", "--archive",
                       (td / "toy.arc").string(), "--out", (td / "out").string(), "--vocab",
                       fixtures::data_path("toy_vocab.txt").string(), "--weight", "toy-digits=2"});
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_TRUE(std::filesystem::exists(td / "out" / "final.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(td / "out" / "ckpt-2.ckpt"));
  EXPECT_NE(tr.out.find("\"step\""), std::string::npos);
  const auto saved = parse_config(td / "out" / "config.txt", false);
  EXPECT_EQ(saved.train.seed, 5u);
  EXPECT_EQ(saved.preset, "toy");
  EXPECT_EQ(load_checkpoint(td / "out" / "final.ckpt").step, 3u);

  write_wav(td / "u.wav", {fixtures::digit_tones({3, 1}), kSampleRate});
  const auto dec = run({"decode", "--audio", (td / "u.wav").string(), "--checkpoint", (td / "out" / "final.ckpt").string()});
  EXPECT_EQ(dec.code, 0) << dec.err;
  EXPECT_EQ(dec.out.back(), '\n');

  const auto ev = run({"--preset", "toy", "eval", "--archive", (td / "toy.arc").string(), "--checkpoint",
                       (td / "out" / "final.ckpt").string(), "--report", (td / "wer.json").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("toy-digits"), std::string::npos);
  const auto report = Json::parse(slurp(td / "wer.json"));
  EXPECT_EQ(report["datasets"]["toy-digits"]["evaluated"], 4);

  EXPECT_EQ(run({"--config", (td / "run.cfg").string(), "train", "--archive", (td / "toy.arc").string(), "--out",
                 (td / "o2").string()})
                .code,
            1);  // no vocabulary
}

TEST(Cli, BinaryRuns) {
  const std::string cmd = std::string(DOTA_CLI_PATH) + " --help > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  const std::string bad = std::string(DOTA_CLI_PATH) + " > /dev/null 2>&1";
  EXPECT_NE(std::system(bad.c_str()), 0);
}
