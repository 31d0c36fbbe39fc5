#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dfm/tensor.hpp"

namespace dfm {

/// Ordered, named collection of tensors owned by one network component.
/// Non-trainable entries hold buffers such as batchnorm running statistics.
template <class T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    BasicTensor<T> tensor;
    bool trainable = true;
  };

  BasicTensor<T>& add(std::string name, BasicTensor<T> tensor, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    tensor.set_requires_grad(trainable);
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(tensor), trainable});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const BasicTensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return entries_[it->second].tensor;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<BasicTensor<T>> trainable() const {
    std::vector<BasicTensor<T>> out;
    for (const auto& e : entries_)
      if (e.trainable) out.push_back(e.tensor);
    return out;
  }

  /// Deep copy, optionally converting precision.
  template <class U = T>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.template cast<U>(), e.trainable);
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dfm
