#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace dota {

using Json = nlohmann::json;

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  std::size_t total() const { return substitutions + insertions + deletions; }
  ErrorCounts& operator+=(const ErrorCounts& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    return *this;
  }
  bool operator==(const ErrorCounts&) const = default;
};

/// Minimum-edit word alignment with unit costs. On equal-cost paths the
/// backtrace takes the diagonal (match or substitution) first, so a
/// substitution is preferred to an insertion plus a deletion.
inline ErrorCounts word_errors(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::uint32_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<std::uint32_t>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<std::uint32_t>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u), at(i - 1, j) + 1, at(i, j - 1) + 1});

  ErrorCounts e;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u)) {
      if (ref[i - 1] != hyp[j - 1]) ++e.substitutions;
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++e.deletions;
      --i;
    } else {
      ++e.insertions;
      --j;
    }
  }
  return e;
}

struct DatasetWer {
  ErrorCounts errors;
  std::size_t ref_words = 0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;        // reference over the token limit
  std::size_t sampled_away = 0;   // beyond the per-dataset sample cap

  double wer() const {
    return ref_words == 0 ? (errors.total() == 0 ? 0.0 : std::numeric_limits<double>::infinity())
                          : static_cast<double>(errors.total()) / static_cast<double>(ref_words);
  }
};

struct WerReport {
  std::map<std::string, DatasetWer> datasets;

  DatasetWer aggregate() const {
    DatasetWer total;
    for (const auto& [_, d] : datasets) {
      total.errors += d.errors;
      total.ref_words += d.ref_words;
      total.evaluated += d.evaluated;
      total.skipped += d.skipped;
      total.sampled_away += d.sampled_away;
    }
    return total;
  }

  Json to_json() const {
    auto one = [](const DatasetWer& d) {
      return Json{{"substitutions", d.errors.substitutions},
                  {"insertions", d.errors.insertions},
                  {"deletions", d.errors.deletions},
                  {"reference_words", d.ref_words},
                  {"evaluated", d.evaluated},
                  {"skipped", d.skipped},
                  {"sampled_away", d.sampled_away},
                  {"wer", d.wer()}};
    };
    Json j;
    j["datasets"] = Json::object();
    for (const auto& [name, d] : datasets) j["datasets"][name] = one(d);
    j["aggregate"] = one(aggregate());
    return j;
  }

  std::string to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(28) << "dataset" << std::right << std::setw(8) << "WER%" << std::setw(8) << "sub"
       << std::setw(8) << "ins" << std::setw(8) << "del" << std::setw(10) << "words" << std::setw(8) << "utts"
       << std::setw(9) << "skipped" << "\n";
    auto row = [&](const std::string& name, const DatasetWer& d) {
      os << std::left << std::setw(28) << name << std::right << std::fixed << std::setprecision(2) << std::setw(8)
         << 100.0 * d.wer() << std::setw(8) << d.errors.substitutions << std::setw(8) << d.errors.insertions
         << std::setw(8) << d.errors.deletions << std::setw(10) << d.ref_words << std::setw(8) << d.evaluated
         << std::setw(9) << d.skipped << "\n";
    };
    for (const auto& [name, d] : datasets) row(name, d);
    row("(all)", aggregate());
    return os.str();
  }
};

}  // namespace dota
