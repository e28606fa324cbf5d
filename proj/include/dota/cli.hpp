#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dota/archive.hpp"
#include "dota/checkpoint.hpp"
#include "dota/config.hpp"
#include "dota/decode.hpp"
#include "dota/frontend.hpp"
#include "dota/schedule.hpp"
#include "dota/text.hpp"
#include "dota/train.hpp"
#include "dota/vocab.hpp"
#include "dota/wav.hpp"

namespace dota {

/// Feature dump: u32 rows, u32 cols, then row-major little-endian f32.
inline void write_features(const std::filesystem::path& path, const MelFeatures& m) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * static_cast<std::size_t>(m.size()));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  le::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) le::put<float>(out, m.data()[i]);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

inline MelFeatures read_features(const std::filesystem::path& path) {
  const auto b = detail::read_file_bytes(path);
  if (b.size() < 8) throw FormatError(path.string() + ": truncated feature file");
  const auto rows = le::get<std::uint32_t>(b.data());
  const auto cols = le::get<std::uint32_t>(b.data() + 4);
  if (b.size() != 8 + 4ull * rows * cols) throw FormatError(path.string() + ": feature payload size mismatch");
  MelFeatures m(rows, cols);
  std::memcpy(m.data(), b.data() + 8, 4ull * rows * cols);
  return m;
}

/// Reads a wav file and brings it to the 16 kHz model rate.
inline std::vector<float> load_audio_16k(const std::filesystem::path& path) {
  const Waveform w = read_wav(path);
  if (w.sample_rate == kSampleRate) return w.samples;
  return resample(w.samples, w.sample_rate, kSampleRate);
}

/// Parses argv and runs one subcommand; returns the process exit code.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Decoder-only transformer speech recognition toolkit"};
  app.require_subcommand(1);

  std::string config_path, preset, precision;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--preset", preset, "architecture preset")->check(CLI::IsMember(preset_names()));
  app.add_option("--seed", seed, "training seed");
  app.add_option("--workers", workers, "worker threads");
  app.add_option("--precision", precision, "high or reduced")->check(CLI::IsMember({"high", "reduced"}));

  auto* ingest_cmd = app.add_subcommand("ingest", "build an archive from a TSV manifest");
  std::string manifest, archive_out;
  ingest_cmd->add_option("--manifest", manifest, "rows of audio_path<TAB>transcript<TAB>dataset_id")->required();
  ingest_cmd->add_option("--out", archive_out, "archive path")->required();

  auto* norm_cmd = app.add_subcommand("normalize", "normalize transcripts, one per line");
  std::string norm_in, norm_out;
  norm_cmd->add_option("--in", norm_in)->required();
  norm_cmd->add_option("--out", norm_out)->required();

  auto* mel_cmd = app.add_subcommand("melspec", "dump log-mel features of a wav file");
  std::string mel_in, mel_out;
  std::size_t mel_stack = 1;
  bool mel_raw = false;
  mel_cmd->add_option("--in", mel_in)->required();
  mel_cmd->add_option("--out", mel_out)->required();
  mel_cmd->add_option("--stack", mel_stack, "frame stacking factor");
  mel_cmd->add_flag("--raw", mel_raw, "skip per-instance scaling");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::vector<std::string> train_archives, weight_args;
  std::string train_out, vocab_arg;
  train_cmd->add_option("--archive", train_archives)->required();
  train_cmd->add_option("--out", train_out)->required();
  train_cmd->add_option("--vocab", vocab_arg, "vocabulary file (overrides vocab_path)");
  train_cmd->add_option("--weight", weight_args, "dataset upsampling override id=w");

  auto* decode_cmd = app.add_subcommand("decode", "transcribe a wav file");
  std::string decode_audio, decode_ckpt;
  decode_cmd->add_option("--audio", decode_audio)->required();
  decode_cmd->add_option("--checkpoint", decode_ckpt)->required();

  auto* eval_cmd = app.add_subcommand("eval", "word error rate of a checkpoint on an archive");
  std::string eval_archive, eval_ckpt, eval_report;
  eval_cmd->add_option("--archive", eval_archive)->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--report", eval_report)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    auto run_config = [&] {
      std::string text;
      std::string source = "<flags>";
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw IoError("cannot open config " + config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        text += ss.str();
        source = config_path;
      }
      // presets apply in order before other keys, so the flag wins over the file
      if (!preset.empty()) text += "\npreset = " + preset + "\n";
      RunConfig rc = parse_config_text(text, source);
      if (seed) rc.train.seed = *seed;
      if (workers) rc.workers = rc.eval.workers = *workers;
      if (!precision.empty()) rc.train.precision = parse_precision(precision);
      rc.validate();
      return rc;
    };

    if (*ingest_cmd) {
      const auto sources = read_manifest(manifest);
      const auto result = ingest(sources, archive_out);
      for (const auto& e : result.errors)
        err << "ingest: skipped " << sources[e.source_index].audio.string() << ": " << e.message << "\n";
      out << "wrote " << result.index.size() << " records to " << archive_out << "\n";
      return 0;
    }
    if (*norm_cmd) {
      std::ifstream in(norm_in);
      if (!in) throw IoError("cannot open " + norm_in);
      std::ofstream o(norm_out);
      if (!o) throw IoError("cannot write " + norm_out);
      std::string line;
      while (std::getline(in, line)) o << normalize(line) << "\n";
      return 0;
    }
    if (*mel_cmd) {
      RunConfig rc = run_config();
      if (mel_raw) rc.frontend.normalize = false;
      const Frontend fe(rc.frontend);
      const auto features = stack_frames(fe.features(load_audio_16k(mel_in)), mel_stack);
      write_features(mel_out, features);
      out << "wrote " << features.rows() << "x" << features.cols() << " features to " << mel_out << "\n";
      return 0;
    }
    if (*train_cmd) {
      RunConfig rc = run_config();
      const std::string vpath = vocab_arg.empty() ? rc.vocab_path : vocab_arg;
      if (vpath.empty()) throw ConfigError("train: no vocabulary given (vocab_path or --vocab)");
      Vocabulary vocab = Vocabulary::load(vpath);
      std::vector<ArchiveReader> readers;
      readers.reserve(train_archives.size());
      for (const auto& a : train_archives) readers.emplace_back(a);
      std::vector<const ArchiveReader*> ptrs;
      std::vector<std::string> ids;
      for (const auto& r : readers) {
        ptrs.push_back(&r);
        ids.insert(ids.end(), r.datasets().begin(), r.datasets().end());
      }
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      SamplingPlan plan = corpus_upsampling_plan(ids, rc.train.seed);
      for (const auto& w : weight_args) {
        const auto eq = w.find('=');
        if (eq == std::string::npos) throw ConfigError("--weight expects id=w, got '" + w + "'");
        plan.weights[w.substr(0, eq)] = static_cast<int>(config_detail::parse_uint<unsigned>(w.substr(eq + 1)));
      }
      Trainer trainer(init_params(rc.model, rc.train.seed), ptrs, plan, std::move(vocab), rc.setup());
      {
        std::filesystem::create_directories(train_out);
        std::ofstream cfg_out(std::filesystem::path(train_out) / "config.txt");
        cfg_out << serialize_config(rc);
      }
      const auto ckpts = trainer.run(train_out, [&](const StepLog& s) {
        if (s.step % rc.train.log_every == 0) out << s.to_json_line() << "\n";
      });
      out << "final checkpoint: " << ckpts.back().string() << "\n";
      return 0;
    }
    if (*decode_cmd) {
      const Checkpoint ck = load_checkpoint(decode_ckpt);
      const Vocabulary vocab(ck.vocab);
      const Frontend fe(ck.frontend);
      const auto feats = model_features(fe, load_audio_16k(decode_audio), ck.params.config.stack_factor);
      out << greedy_decode(ck.params, feats, vocab).text << "\n";
      return 0;
    }
    if (*eval_cmd) {
      RunConfig rc = run_config();
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      const ArchiveReader archive(eval_archive);
      const Vocabulary vocab(ck.vocab);
      const Frontend fe(ck.frontend);
      const WerReport report = evaluate(archive, greedy_transcriber(archive, ck.params, fe, vocab), vocab, rc.eval);
      std::ofstream o(eval_report);
      if (!o) throw IoError("cannot write " + eval_report);
      o << report.to_json().dump(2) << "\n";
      out << report.to_table();
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace dota
