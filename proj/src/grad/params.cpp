#include "imanip/grad/params.hpp"

#include "imanip/errors.hpp"

namespace imanip::grad {

const Tensor& BoundParams::operator()(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw LookupError("unknown parameter '" + name + "'");
  return it->second;
}

bool path_has_prefix(const std::string& path, const std::string& prefix) {
  if (path.size() < prefix.size() || path.compare(0, prefix.size(), prefix) != 0) return false;
  return path.size() == prefix.size() || path[prefix.size()] == '.';
}

void ParameterSet::add(const std::string& name, Tensor value, bool trainable) {
  if (name.empty()) throw ContractError("parameter path must be non-empty");
  if (entries_.count(name)) throw RegistryError("duplicate parameter path '" + name + "'");
  entries_.emplace(name, Entry{value.detached(), trainable});
}

const ParameterSet::Entry& ParameterSet::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("unknown parameter '" + name + "'");
  return it->second;
}

ParameterSet::Entry& ParameterSet::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::get(const std::string& name) const { return entry(name).value; }

void ParameterSet::set(const std::string& name, Tensor value) {
  Entry& e = entry(name);
  if (e.value.shape() != value.shape()) {
    throw DimensionError("parameter '" + name + "' shape " + shape_string(e.value.shape()) + " cannot take " +
                         shape_string(value.shape()));
  }
  e.value = value.detached();
}

std::span<double> ParameterSet::mutable_data(const std::string& name) { return entry(name).value.mutable_data(); }

bool ParameterSet::trainable(const std::string& name) const { return entry(name).trainable; }

void ParameterSet::set_trainable(const std::string& name, bool trainable) { entry(name).trainable = trainable; }

std::size_t ParameterSet::set_trainable_prefix(const std::string& prefix, bool trainable) {
  std::size_t n = 0;
  for (auto& [name, e] : entries_) {
    if (path_has_prefix(name, prefix)) {
      e.trainable = trainable;
      ++n;
    }
  }
  return n;
}

void ParameterSet::set_all_trainable(bool trainable) {
  for (auto& [name, e] : entries_) e.trainable = trainable;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParameterSet::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) out.push_back(name);
  }
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.numel();
  return n;
}

std::size_t ParameterSet::trainable_scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) {
    if (e.trainable) n += e.value.numel();
  }
  return n;
}

BoundParams ParameterSet::bind(Tape* tape, bool watch_all) const {
  BoundParams out;
  for (const auto& [name, e] : entries_) {
    if (tape && (e.trainable || watch_all)) {
      out.values_.emplace(name, tape->watch(name, e.value));
    } else {
      out.values_.emplace(name, e.value);
    }
  }
  return out;
}

std::map<std::string, bool> ParameterSet::trainable_flags() const {
  std::map<std::string, bool> out;
  for (const auto& [name, e] : entries_) out.emplace(name, e.trainable);
  return out;
}

}  // namespace imanip::grad
