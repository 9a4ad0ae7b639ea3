#pragma once

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gradvar {

/// Flat vector of model parameters with named layer views. Layers are
/// allocated once during model construction; the total length is immutable
/// afterwards.
class ParamStore {
 public:
  using Range = std::pair<std::size_t, std::size_t>; // [begin, end)

  /// Reserves `count` slots under `name` and returns the first index.
  std::size_t allocate(const std::string& name, std::size_t count) {
    if (ranges_.count(name) > 0)
      throw std::invalid_argument("ParamStore: duplicate layer name " + name);
    std::size_t begin = values_.size();
    values_.resize(begin + count, 0.0);
    ranges_[name] = {begin, begin + count};
    return begin;
  }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  Range range(const std::string& name) const {
    auto it = ranges_.find(name);
    if (it == ranges_.end())
      throw std::invalid_argument("ParamStore: unknown layer " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return ranges_.count(name) > 0; }
  const std::map<std::string, Range>& ranges() const { return ranges_; }

  std::span<double> layer(const std::string& name) {
    Range r = range(name);
    return {values_.data() + r.first, r.second - r.first};
  }
  std::span<const double> layer(const std::string& name) const {
    Range r = range(name);
    return {values_.data() + r.first, r.second - r.first};
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::vector<double> values_;
  std::map<std::string, Range> ranges_;
};

} // namespace gradvar
