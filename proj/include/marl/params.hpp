#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "marl/common.hpp"
#include "marl/tape.hpp"
#include "marl/tensor.hpp"

namespace marl {

// Ordered, named parameter collection. The entry order and the naming
// convention (encoder/conv1/w, attn/head0/q, heads/policy/w, ...) are part
// of the checkpoint contract. Non-trainable entries (frozen columns) are
// bound to the tape without gradients.
template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
  };

  std::vector<Entry> entries;
  std::unordered_map<std::string, size_t> index;

  void add(const std::string& name, Tensor<T> value, bool trainable = true) {
    MARL_CHECK(!index.count(name), "duplicate parameter name: ", name);
    index[name] = entries.size();
    entries.push_back(Entry{name, std::move(value), trainable});
  }

  bool has(const std::string& name) const { return index.count(name) != 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = index.find(name);
    MARL_CHECK(it != index.end(), "unknown parameter: ", name);
    return entries[it->second].value;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = index.find(name);
    MARL_CHECK(it != index.end(), "unknown parameter: ", name);
    return entries[it->second].value;
  }

  size_t size() const { return entries.size(); }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries) out.add(e.name, e.value.template cast<U>(), e.trainable);
    return out;
  }

  bool bitwise_equal(const ParamStore& o) const {
    if (entries.size() != o.entries.size()) return false;
    for (size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].name != o.entries[i].name) return false;
      if (entries[i].value.shape != o.entries[i].value.shape) return false;
      if (entries[i].value.data != o.entries[i].value.data) return false;
    }
    return true;
  }
};

using Params = ParamStore<float>;

// Parameters registered as leaves on a tape for one forward/backward pass.
template <typename T>
struct BoundParams {
  Tape<T>* tape = nullptr;
  const ParamStore<T>* store = nullptr;
  std::vector<typename Tape<T>::Var> vars;

  static BoundParams bind(Tape<T>& tape, const ParamStore<T>& store) {
    BoundParams bp;
    bp.tape = &tape;
    bp.store = &store;
    bp.vars.reserve(store.entries.size());
    for (const auto& e : store.entries) bp.vars.push_back(tape.leaf(e.value, e.trainable));
    return bp;
  }

  typename Tape<T>::Var operator[](const std::string& name) const {
    auto it = store->index.find(name);
    MARL_CHECK(it != store->index.end(), "unknown parameter: ", name);
    return vars[it->second];
  }

  // Gradients in store entry order (zeros for non-trainable entries).
  std::vector<Tensor<T>> gradients() const {
    std::vector<Tensor<T>> out;
    out.reserve(vars.size());
    for (auto v : vars) out.push_back(tape->grad(v));
    return out;
  }
};

}  // namespace marl
