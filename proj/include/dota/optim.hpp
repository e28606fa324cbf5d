#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dota/common.hpp"
#include "dota/params.hpp"
#include "dota/vocab.hpp"

namespace dota {

enum class Precision { kHigh, kReduced };

inline std::string to_string(Precision p) { return p == Precision::kHigh ? "high" : "reduced"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "high") return Precision::kHigh;
  if (s == "reduced") return Precision::kReduced;
  throw ConfigError("precision must be 'high' or 'reduced', got '" + s + "'");
}

struct TrainConfig {
  std::uint64_t total_steps = 1'000'000;
  std::size_t batch_size = 128;
  double peak_lr = 2e-4;
  std::uint64_t warmup_steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.1;
  double grad_clip_norm = 1.0;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  Precision precision = Precision::kHigh;
  std::uint64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::uint64_t log_every = 1;

  void validate() const {
    if (total_steps == 0 || warmup_steps >= total_steps) throw ConfigError("train: need warmup_steps < total_steps");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (!(peak_lr > 0.0 && grad_clip_norm > 0.0 && adam_epsilon > 0.0 && weight_decay >= 0.0))
      throw ConfigError("train: rates must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: betas must lie in [0, 1)");
    if (log_every == 0) throw ConfigError("train: log_every must be positive");
  }

  bool operator==(const TrainConfig&) const = default;
};

/// Linear warmup to the peak, then cosine decay to zero at total_steps.
inline double lr_at(std::uint64_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) throw Error("lr_at: step " + std::to_string(step) + " beyond total_steps");
  if (step < cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (step == cfg.total_steps) return 0.0;
  const double progress =
      static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

/// Token-level cross entropy. `dlogits` holds d(sum_nll)/d(logits).
template <class T>
struct TokenLoss {
  double sum_nll = 0.0;
  std::size_t count = 0;
  MatrixRM<T> dlogits;

  double mean() const { return sum_nll / static_cast<double>(count); }
};

/// Cross entropy of row i of `logits` against targets[i]; rows with
/// mask[i] == 0 are ignored. An empty mask selects every row.
template <class T>
TokenLoss<T> cross_entropy(const MatrixRM<T>& logits, std::span<const TokenId> targets,
                           std::span<const std::uint8_t> mask = {}) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) throw ShapeError("cross_entropy: target count mismatch");
  if (!mask.empty() && mask.size() != targets.size()) throw ShapeError("cross_entropy: mask length mismatch");
  TokenLoss<T> out;
  out.dlogits = MatrixRM<T>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (!mask.empty() && mask[static_cast<std::size_t>(i)] == 0) continue;
    const TokenId t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logits.cols()) throw ShapeError("cross_entropy: target id out of range");
    const T mx = logits.row(i).maxCoeff();
    const auto e = (logits.row(i).array() - mx).exp();
    const T z = e.sum();
    out.sum_nll += static_cast<double>(std::log(z) + mx - logits(i, t));
    out.dlogits.row(i) = e / z;
    out.dlogits(i, t) -= static_cast<T>(1);
    ++out.count;
  }
  return out;
}

/// Mean negative log-likelihood over unmasked rows.
template <class T>
double loss(const MatrixRM<T>& logits, std::span<const TokenId> targets, std::span<const std::uint8_t> mask = {}) {
  const auto l = cross_entropy(logits, targets, mask);
  if (l.count == 0) throw Error("loss: every position is masked");
  return l.mean();
}

/// Rescales so the global L2 norm is at most `max_norm`; returns the norm
/// before clipping. Non-finite gradients signal divergence.
template <class T>
double clip_gradients(ParamSet<T>& grads, double max_norm = 1.0) {
  const double norm = std::sqrt(grads.squared_norm());
  if (!std::isfinite(norm)) throw DivergenceError("clip_gradients: non-finite gradient norm");
  if (norm > max_norm) {
    const auto s = static_cast<T>(max_norm / norm);
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] *= s;
  }
  return norm;
}

/// Throws unless biases and layer-norm tensors are exactly the non-decayed
/// set and every other tensor is decayed.
inline void check_decay_partition(const std::vector<ParamInfo>& infos) {
  for (const auto& i : infos) {
    const bool norm = i.name.find("ln") != std::string::npos &&
                      (i.name.ends_with(".gain") || i.name.ends_with(".bias"));
    const bool bias = i.name.ends_with(".bias");
    const bool exempt = norm || bias;
    if (exempt == is_decayed(i.kind))
      throw Error("weight-decay partition violated by " + i.name);
  }
}

struct OptState {
  std::vector<MatrixRM<double>> m, v;
  std::uint64_t step = 0;
};

class AdamW {
 public:
  explicit AdamW(const ParamSet<double>& params) {
    check_decay_partition(params.infos());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state_.m.push_back(MatrixRM<double>::Zero(params[i].rows(), params[i].cols()));
      state_.v.push_back(MatrixRM<double>::Zero(params[i].rows(), params[i].cols()));
    }
  }

  const OptState& state() const { return state_; }

  /// One bias-corrected Adam update with decoupled decay p <- p(1 - lr*wd)
  /// on decayable tensors.
  void step(ParamSet<double>& params, const ParamSet<double>& grads, double lr, const TrainConfig& cfg) {
    if (!params.same_layout(grads) || params.size() != state_.m.size())
      throw ShapeError("adamw_step: parameter/gradient layout mismatch");
    ++state_.step;
    const double t = static_cast<double>(state_.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      const auto& g = grads[i];
      auto& m = state_.m[i];
      auto& v = state_.v[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      if (is_decayed(params.info(i).kind)) p *= 1.0 - lr * cfg.weight_decay;
      p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_epsilon);
    }
  }

 private:
  OptState state_;
};

}  // namespace dota
