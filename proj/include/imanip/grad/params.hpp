#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "imanip/grad/tape.hpp"
#include "imanip/grad/tensor.hpp"

namespace imanip::grad {

// Parameters bound for one forward pass: trainable entries carry tape handles
// when a tape was supplied, everything else is a constant.
class BoundParams {
 public:
  const Tensor& operator()(const std::string& name) const;
  bool contains(const std::string& name) const { return values_.count(name) != 0; }

 private:
  friend class ParameterSet;
  std::map<std::string, Tensor> values_;
};

// Named parameter store. Paths are dot-separated and unique; freezing only
// flips the trainable flag.
class ParameterSet {
 public:
  void add(const std::string& name, Tensor value, bool trainable = true);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Tensor& get(const std::string& name) const;
  // Replace the value; shape must stay the same.
  void set(const std::string& name, Tensor value);
  std::span<double> mutable_data(const std::string& name);

  bool trainable(const std::string& name) const;
  void set_trainable(const std::string& name, bool trainable);
  // Applies to every path equal to `prefix` or starting with `prefix + "."`.
  std::size_t set_trainable_prefix(const std::string& prefix, bool trainable);
  void set_all_trainable(bool trainable);

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  std::size_t trainable_scalar_count() const;

  // Watch trainable entries on `tape` (or all entries when `watch_all`).
  BoundParams bind(Tape* tape, bool watch_all = false) const;

  std::map<std::string, bool> trainable_flags() const;

 private:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);

  std::map<std::string, Entry> entries_;
};

bool path_has_prefix(const std::string& path, const std::string& prefix);

}  // namespace imanip::grad
