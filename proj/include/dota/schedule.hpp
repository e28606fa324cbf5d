#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dota/archive.hpp"
#include "dota/common.hpp"

namespace dota {

/// Per-dataset upsampling weights for one epoch. Datasets absent from
/// `weights` default to weight 1.
struct SamplingPlan {
  std::map<std::string, int> weights;
  std::uint64_t seed = 0;
};

struct ScheduleEntry {
  std::size_t archive = 0;
  std::size_t index = 0;

  bool operator==(const ScheduleEntry&) const = default;
  auto operator<=>(const ScheduleEntry&) const = default;
};

/// Shuffled epoch order in which every record of a weight-w dataset appears
/// exactly w times. Deterministic in (plan.seed, epoch).
inline std::vector<ScheduleEntry> epoch_schedule(const SamplingPlan& plan,
                                                 std::span<const ArchiveReader* const> archives,
                                                 std::uint64_t epoch = 0) {
  std::set<std::string> known;
  for (const auto* a : archives) known.insert(a->datasets().begin(), a->datasets().end());
  for (const auto& [id, w] : plan.weights) {
    if (!known.contains(id)) throw Error("epoch_schedule: unknown dataset id '" + id + "'");
    if (w < 1) throw Error("epoch_schedule: weight for '" + id + "' must be a positive integer");
  }

  std::vector<ScheduleEntry> out;
  for (std::size_t a = 0; a < archives.size(); ++a) {
    for (std::size_t i = 0; i < archives[a]->size(); ++i) {
      const auto it = plan.weights.find(archives[a]->dataset_of(i));
      const int w = it == plan.weights.end() ? 1 : it->second;
      for (int k = 0; k < w; ++k) out.push_back({a, i});
    }
  }
  Rng rng(mix_seed(plan.seed, epoch));
  rng.shuffle(out);
  return out;
}

/// Weighting used for the large public corpora: every dataset is upsampled
/// 2x except MultilingualLibriSpeech, PeoplesSpeech, GigaSpeech, SPGISpeech
/// and LibriSpeech. Matching is a case-insensitive prefix test on the id.
inline SamplingPlan corpus_upsampling_plan(std::span<const std::string> dataset_ids, std::uint64_t seed) {
  static const char* kLarge[] = {"multilinguallibrispeech", "mls", "peoplesspeech", "gigaspeech", "spgispeech",
                                 "librispeech"};
  SamplingPlan plan;
  plan.seed = seed;
  for (const auto& id : dataset_ids) {
    std::string lower = id;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    const bool large = std::any_of(std::begin(kLarge), std::end(kLarge),
                                   [&](const char* p) { return lower.starts_with(p); });
    plan.weights[id] = large ? 1 : 2;
  }
  return plan;
}

}  // namespace dota
