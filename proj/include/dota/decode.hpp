#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "dota/archive.hpp"
#include "dota/frontend.hpp"
#include "dota/model.hpp"
#include "dota/text.hpp"
#include "dota/vocab.hpp"
#include "dota/wer.hpp"

namespace dota {

struct Hypothesis {
  std::vector<TokenId> ids;  // generated content, end-of-text excluded
  std::string text;          // detokenized and normalized
  std::size_t source_index = 0;
};

/// Argmax decoding from begin-of-text until end-of-text or until the framed
/// sequence (begin, generated tokens) reaches max_text_tokens. Ties resolve
/// to the lowest id.
template <class T>
Hypothesis greedy_decode(const ModelParams<T>& mp, const MelFeatures& features, const Vocabulary& vocab) {
  if (vocab.size() != mp.config.vocab_size) throw ShapeError("greedy_decode: vocabulary size mismatch");
  IncrementalDecoder<T> dec(mp, features);
  Hypothesis h;
  TokenId prev = vocab.bos();
  for (std::size_t framed = 1; framed < mp.config.max_text_tokens; ++framed) {
    const auto logits = dec.step(prev);
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    const auto next = static_cast<TokenId>(best);
    if (next == vocab.eos()) break;
    h.ids.push_back(next);
    prev = next;
  }
  h.text = normalize(detokenize(h.ids, vocab));
  return h;
}

/// Audio-to-features path shared by training, decoding and evaluation.
inline MelFeatures model_features(const Frontend& fe, std::span<const float> audio, std::size_t stack_factor) {
  return stack_frames(fe.features(audio), stack_factor);
}

struct EvalConfig {
  std::size_t max_samples = 24000;     // per dataset
  std::size_t max_ref_tokens = 145;    // normalized reference cap
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  bool operator==(const EvalConfig&) const = default;
};

/// Indices scored for `dataset`: everything when at most max_samples records
/// exist, otherwise a seeded sample without replacement, in archive order.
inline std::vector<std::size_t> eval_selection(const ArchiveReader& archive, const std::string& dataset,
                                               const EvalConfig& cfg) {
  std::vector<std::size_t> idx = archive.records_of(dataset);
  if (idx.size() > cfg.max_samples) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : dataset) h = (h ^ ch) * 0x100000001B3ULL;
    Rng rng(mix_seed(cfg.seed, h));
    rng.shuffle(idx);
    idx.resize(cfg.max_samples);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

/// Maps a record index to its raw hypothesis text.
using Transcriber = std::function<std::string(std::size_t)>;

/// Scores `transcribe` against every dataset of the archive. References
/// longer than max_ref_tokens (after normalization) are skipped; both sides
/// are normalized before alignment. `transcribe` must be thread-safe when
/// cfg.workers > 1.
inline WerReport evaluate(const ArchiveReader& archive, const Transcriber& transcribe, const Vocabulary& vocab,
                          const EvalConfig& cfg) {
  struct Job {
    std::string dataset;
    std::size_t index;
    std::vector<std::string> ref;
  };
  WerReport report;
  std::vector<Job> jobs;
  for (const auto& ds : archive.datasets()) {
    auto& d = report.datasets[ds];
    const auto sel = eval_selection(archive, ds, cfg);
    d.sampled_away = archive.records_of(ds).size() - sel.size();
    for (std::size_t i : sel) {
      const std::string ref = normalize(archive.transcript(i));
      if (tokenize_all(ref, vocab).size() > cfg.max_ref_tokens) {
        ++d.skipped;
        continue;
      }
      jobs.push_back({ds, i, split_words(ref)});
    }
  }

  std::vector<std::vector<std::string>> hyps(jobs.size());
  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) hyps[k] = split_words(normalize(transcribe(jobs[k].index)));
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, jobs.size()));
  if (workers == 1) {
    run(0, jobs.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (jobs.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(run, std::min(jobs.size(), w * chunk), std::min(jobs.size(), (w + 1) * chunk));
    for (auto& t : pool) t.join();
  }

  for (std::size_t k = 0; k < jobs.size(); ++k) {
    auto& d = report.datasets[jobs[k].dataset];
    d.errors += word_errors(jobs[k].ref, hyps[k]);
    d.ref_words += jobs[k].ref.size();
    ++d.evaluated;
  }
  return report;
}

/// Transcriber that runs greedy decoding on archive audio.
template <class T>
Transcriber greedy_transcriber(const ArchiveReader& archive, const ModelParams<T>& mp, const Frontend& fe,
                               const Vocabulary& vocab) {
  return [&archive, &mp, &fe, &vocab](std::size_t i) {
    const auto audio = from_pcm16(archive.audio(i));
    return greedy_decode(mp, model_features(fe, audio, mp.config.stack_factor), vocab).text;
  };
}

}  // namespace dota
