#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdnet/errors.hpp"
#include "cdnet/tensor.hpp"

namespace cdnet {

/// Which part of the graph a parameter belongs to. kAuxBranch is the
/// deep-supervision weight set, kEncoder the encoding path.
enum class Partition { kEncoder, kAuxBranch, kAuxHead, kDecoder, kFeatureWeighting };

const char* partition_name(Partition p);
Partition partition_from_name(const std::string& s);

/// Flat, ordered registry of every learnable tensor of a graph.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Partition partition;
    std::string group;
    Parameter<T> param;
  };

  std::size_t add(const std::string& name, Partition partition, const std::string& group, Shape shape) {
    if (index_.contains(name)) throw ConfigError("ParamStore: duplicate parameter name " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{name, partition, group, Parameter<T>(shape)});
    return entries_.size() - 1;
  }

  std::size_t size() const { return entries_.size(); }
  Entry& entry(std::size_t id) { return entries_.at(id); }
  const Entry& entry(std::size_t id) const { return entries_.at(id); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  Tensor<T>& value(std::size_t id) { return entries_[id].param.value; }
  const Tensor<T>& value(std::size_t id) const { return entries_[id].param.value; }
  Tensor<T>& grad(std::size_t id) { return entries_[id].param.grad; }

  std::size_t id_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("ParamStore: unknown parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  void zero_grad() {
    for (auto& e : entries_) e.param.grad.zero();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.param.value.size();
    return n;
  }

  /// Distinct group labels within a partition, in registration order.
  std::vector<std::string> groups(Partition p) const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      if (e.partition != p) continue;
      if (out.empty() || out.back() != e.group) out.push_back(e.group);
    }
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Fan-in variance-scaling normal initializer (scale 2) for conv kernels.
template <typename T>
void init_kernel(Tensor<T>& w, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(dist(rng));
}

}  // namespace cdnet
