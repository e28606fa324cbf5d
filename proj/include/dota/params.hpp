#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dota/common.hpp"
#include "dota/frontend.hpp"

namespace dota {

/// How a tensor is treated by the optimizer and initializer.
enum class ParamKind {
  kWeight,    // weight matrix or embedding table; decayed
  kResidual,  // weight feeding the residual stream; decayed, scaled init
  kBias,      // not decayed
  kNormGain,  // layer-norm gain; not decayed, initialized to one
  kNormBias,  // layer-norm shift; not decayed
};

inline bool is_decayed(ParamKind k) { return k == ParamKind::kWeight || k == ParamKind::kResidual; }

struct ParamInfo {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  ParamKind kind = ParamKind::kWeight;

  std::size_t numel() const { return static_cast<std::size_t>(rows * cols); }
  bool operator==(const ParamInfo&) const = default;
};

/// Ordered collection of named 2-D tensors. Vectors are stored as 1 x n.
template <class T>
class ParamSet {
 public:
  ParamSet() = default;

  explicit ParamSet(std::vector<ParamInfo> infos) : info_(std::move(infos)) {
    values_.reserve(info_.size());
    for (std::size_t i = 0; i < info_.size(); ++i) {
      if (!by_name_.emplace(info_[i].name, i).second) throw Error("duplicate parameter " + info_[i].name);
      values_.push_back(MatrixRM<T>::Zero(info_[i].rows, info_[i].cols));
    }
  }

  std::size_t size() const { return info_.size(); }
  const std::vector<ParamInfo>& infos() const { return info_; }
  const ParamInfo& info(std::size_t i) const { return info_[i]; }

  MatrixRM<T>& operator[](std::size_t i) { return values_[i]; }
  const MatrixRM<T>& operator[](std::size_t i) const { return values_[i]; }

  std::size_t index_of(const std::string& name) const {
    const auto it = by_name_.find(name);
    if (it == by_name_.end()) throw Error("unknown parameter " + name);
    return it->second;
  }
  MatrixRM<T>& at(const std::string& name) { return values_[index_of(name)]; }
  const MatrixRM<T>& at(const std::string& name) const { return values_[index_of(name)]; }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& i : info_) n += i.numel();
    return n;
  }

  void set_zero() {
    for (auto& v : values_) v.setZero();
  }

  ParamSet zeros_like() const { return ParamSet(info_); }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out(info_);
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = values_[i].template cast<U>();
    return out;
  }

  /// this += other, elementwise over every tensor.
  template <class U>
  void accumulate(const ParamSet<U>& other) {
    if (other.size() != size()) throw ShapeError("ParamSet::accumulate: layout mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other[i].template cast<T>();
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& v : values_) s += static_cast<double>(v.squaredNorm());
    return s;
  }

  bool all_finite() const {
    for (const auto& v : values_)
      if (!v.allFinite()) return false;
    return true;
  }

  bool same_layout(const ParamSet& o) const { return info_ == o.info_; }

  bool operator==(const ParamSet& o) const {
    if (!same_layout(o)) return false;
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (values_[i] != o.values_[i]) return false;
    return true;
  }

 private:
  std::vector<ParamInfo> info_;
  std::vector<MatrixRM<T>> values_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

}  // namespace dota
