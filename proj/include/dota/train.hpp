#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dota/archive.hpp"
#include "dota/augment.hpp"
#include "dota/checkpoint.hpp"
#include "dota/decode.hpp"
#include "dota/frontend.hpp"
#include "dota/model.hpp"
#include "dota/optim.hpp"
#include "dota/schedule.hpp"
#include "dota/text.hpp"
#include "dota/vocab.hpp"

namespace dota {

struct StepLog {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;

  std::string to_json_line() const {
    std::ostringstream os;
    os << std::setprecision(17) << "{\"step\": " << step << ", \"lr\": " << lr << ", \"loss\": " << loss
       << ", \"grad_norm\": " << grad_norm << "}";
    return os.str();
  }
};

/// One prepared training example.
struct TrainExample {
  MelFeatures features;  // stacked
  FramedTokens tokens;
};

/// Everything the trainer needs besides the data.
struct TrainSetup {
  ModelConfig model;
  TrainConfig train;
  AugmentConfig augment;
  FrontendConfig frontend;
  std::size_t workers = 1;
};

/// Mean token loss and summed gradients over a batch; gradients are already
/// divided by the batch's target-token count.
template <class T>
double batch_gradients(const ModelParams<T>& mp, std::span<const TrainExample> batch, ParamSet<double>& grads,
                       std::size_t workers = 1) {
  std::size_t total_tokens = 0;
  for (const auto& ex : batch) total_tokens += ex.tokens.targets.size();
  if (total_tokens == 0) throw Error("batch_gradients: batch has no target tokens");
  const T inv = static_cast<T>(1.0 / static_cast<double>(total_tokens));

  workers = std::max<std::size_t>(1, std::min(workers, batch.size()));
  std::vector<ParamSet<T>> partial(workers, mp.tensors.zeros_like());
  std::vector<double> nll(workers, 0.0);
  auto run = [&](std::size_t w, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      ForwardCache<T> cache;
      const auto logits = forward(mp, batch[i].features, batch[i].tokens.inputs, &cache);
      auto l = cross_entropy(logits, batch[i].tokens.targets);
      nll[w] += l.sum_nll;
      l.dlogits *= inv;
      backward(mp, cache, l.dlogits, partial[w]);
    }
  };
  const std::size_t chunk = (batch.size() + workers - 1) / workers;
  if (workers == 1) {
    run(0, 0, batch.size());
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(run, w, std::min(batch.size(), w * chunk), std::min(batch.size(), (w + 1) * chunk));
    for (auto& t : pool) t.join();
  }
  grads.set_zero();
  double sum = 0.0;
  for (std::size_t w = 0; w < workers; ++w) {
    grads.accumulate(partial[w]);
    sum += nll[w];
  }
  return sum / static_cast<double>(total_tokens);
}

/// Cross-entropy training with AdamW, warmup + cosine schedule and global
/// gradient clipping. Master weights are always double; reduced precision
/// runs forward and backward passes in float.
class Trainer {
 public:
  Trainer(ModelParams<double> init, std::vector<const ArchiveReader*> archives, SamplingPlan plan, Vocabulary vocab,
          TrainSetup setup)
      : params_(std::move(init)),
        archives_(std::move(archives)),
        plan_(std::move(plan)),
        vocab_(std::move(vocab)),
        setup_(std::move(setup)),
        frontend_(setup_.frontend),
        opt_(params_.tensors),
        grads_(params_.tensors.zeros_like()) {
    setup_.train.validate();
    setup_.augment.validate();
    if (params_.config.vocab_size != vocab_.size()) throw ConfigError("train: vocab_size does not match vocabulary");
    if (setup_.frontend.n_frames() != params_.config.mel_frames || setup_.frontend.n_mels != params_.config.n_mels)
      throw ConfigError("train: frontend frame count or mel count does not match the model");
    for (std::size_t a = 0; a < archives_.size(); ++a)
      for (const auto& ds : archives_[a]->datasets()) by_dataset_[{a, ds}] = archives_[a]->records_of(ds);
    new_epoch();
    if (schedule_.empty()) throw Error("train: no training records");
    // with every transform and concatenation off, an instance depends only on
    // its record, so features are memoized (bounded by kCacheBytes)
    const AugmentConfig& a = setup_.augment;
    std::size_t records = 0;
    for (const auto* ar : archives_) records += ar->size();
    const std::size_t bytes = records * setup_.frontend.n_frames() * setup_.frontend.n_mels * sizeof(float);
    deterministic_instances_ = a.p_speed == 0 && a.p_tempo == 0 && a.p_lowpass == 0 && a.p_reverb == 0 &&
                               a.p_concat == 0 && bytes <= kCacheBytes;
  }

  const ModelParams<double>& params() const { return params_; }
  std::uint64_t steps_done() const { return step_; }
  const Vocabulary& vocab() const { return vocab_; }
  const TrainSetup& setup() const { return setup_; }

  /// Builds the example for batch slot `slot` of the next step.
  TrainExample prepare(const ScheduleEntry& e, std::uint64_t sample_id) const {
    if (!deterministic_instances_) return build(e, sample_id);
    {
      std::lock_guard lock(cache_mu_);
      if (auto it = cache_.find({e.archive, e.index}); it != cache_.end()) return it->second;
    }
    TrainExample ex = build(e, sample_id);
    std::lock_guard lock(cache_mu_);
    cache_.emplace(std::pair{e.archive, e.index}, ex);
    return ex;
  }

  TrainExample build(const ScheduleEntry& e, std::uint64_t sample_id) const {
    const ArchiveReader& ar = *archives_[e.archive];
    const auto& members = by_dataset_.at({e.archive, ar.dataset_of(e.index)});
    const std::size_t rank =
        static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), e.index) - members.begin());
    std::size_t taken = 0;
    auto next = [&]() -> std::optional<StreamItem> {
      if (taken == members.size()) return std::nullopt;
      const std::size_t idx = members[(rank + taken++) % members.size()];
      return StreamItem{from_pcm16(ar.audio(idx)), ar.transcript(idx)};
    };
    Rng rng(mix_seed(mix_seed(setup_.train.seed, setup_.augment.seed), sample_id));
    auto inst = assemble_instance(next, setup_.augment, rng, setup_.frontend.instance_samples);
    std::string text;
    for (const auto& t : inst.transcripts) text += t + " ";
    TrainExample ex;
    ex.features = model_features(frontend_, inst.audio, params_.config.stack_factor);
    ex.tokens = frame_tokens(tokenize_all(normalize(text), vocab_), vocab_, params_.config.max_text_tokens);
    return ex;
  }

  StepLog step() {
    const TrainConfig& tc = setup_.train;
    if (step_ >= tc.total_steps) throw Error("train: already at total_steps");
    const std::size_t bs = tc.batch_size;
    std::vector<ScheduleEntry> entries(bs);
    for (auto& e : entries) e = next_entry();
    std::vector<TrainExample> batch(bs);
    parallel_for(bs, [&](std::size_t i) { batch[i] = prepare(entries[i], step_ * bs + i); });

    double mean_loss;
    if (tc.precision == Precision::kHigh) {
      mean_loss = batch_gradients(params_, batch, grads_, setup_.workers);
    } else {
      const auto lowp = params_.cast<float>();
      mean_loss = batch_gradients(lowp, batch, grads_, setup_.workers);
    }
    if (!std::isfinite(mean_loss))
      throw DivergenceError("train: non-finite loss at step " + std::to_string(step_));
    StepLog log;
    log.step = step_;
    log.loss = mean_loss;
    log.grad_norm = clip_gradients(grads_, tc.grad_clip_norm);
    log.lr = lr_at(step_, tc);
    opt_.step(params_.tensors, grads_, log.lr, tc);
    ++step_;
    return log;
  }

  Checkpoint checkpoint() const { return {params_, setup_.frontend, vocab_.tokens(), step_}; }

  /// Runs to total_steps, writing loss.jsonl, periodic ckpt-<step>.ckpt and
  /// final.ckpt into `out_dir`. Returns the checkpoint paths in order.
  std::vector<std::filesystem::path> run(const std::filesystem::path& out_dir,
                                         const std::function<void(const StepLog&)>& on_step = {}) {
    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir / "loss.jsonl", std::ios::app);
    if (!log) throw IoError("cannot write " + (out_dir / "loss.jsonl").string());
    const auto dtype = setup_.train.precision == Precision::kHigh ? TensorDType::kF64 : TensorDType::kF32;
    std::vector<std::filesystem::path> ckpts;
    while (step_ < setup_.train.total_steps) {
      const StepLog s = step();
      if (s.step % setup_.train.log_every == 0 || step_ == setup_.train.total_steps) {
        log << s.to_json_line() << "\n";
        log.flush();
      }
      if (on_step) on_step(s);
      if (setup_.train.checkpoint_every > 0 && step_ % setup_.train.checkpoint_every == 0 &&
          step_ < setup_.train.total_steps) {
        ckpts.push_back(out_dir / ("ckpt-" + std::to_string(step_) + ".ckpt"));
        save_checkpoint(ckpts.back(), checkpoint(), dtype);
      }
    }
    ckpts.push_back(out_dir / "final.ckpt");
    save_checkpoint(ckpts.back(), checkpoint(), dtype);
    return ckpts;
  }

 private:
  void new_epoch() { schedule_ = epoch_schedule(plan_, archives_, epoch_++), cursor_ = 0; }

  ScheduleEntry next_entry() {
    if (cursor_ == schedule_.size()) new_epoch();
    return schedule_[cursor_++];
  }

  template <class Fn>
  void parallel_for(std::size_t n, Fn&& fn) const {
    const std::size_t workers = std::max<std::size_t>(1, std::min(setup_.workers, n));
    if (workers == 1) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      });
    for (auto& t : pool) t.join();
  }

  static constexpr std::size_t kCacheBytes = std::size_t{1} << 30;

  ModelParams<double> params_;
  std::vector<const ArchiveReader*> archives_;
  SamplingPlan plan_;
  Vocabulary vocab_;
  TrainSetup setup_;
  Frontend frontend_;
  AdamW opt_;
  ParamSet<double> grads_;
  std::map<std::pair<std::size_t, std::string>, std::vector<std::size_t>> by_dataset_;
  std::vector<ScheduleEntry> schedule_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t step_ = 0;
  bool deterministic_instances_ = false;
  mutable std::mutex cache_mu_;
  mutable std::map<std::pair<std::size_t, std::size_t>, TrainExample> cache_;
};

}  // namespace dota
