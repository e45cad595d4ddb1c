#include "inode/params.hpp"

#include "inode/errors.hpp"

namespace inode::ad {

int ParamStore::add(std::string_view name, Shape shape) {
  std::string key(name);
  if (by_name_.count(key)) throw ShapeError("duplicate parameter name: " + key);
  const int idx = static_cast<int>(entries_.size());
  entries_.push_back(Entry{key, shape, static_cast<int>(values_.size())});
  by_name_.emplace(std::move(key), idx);
  values_.resize(values_.size() + static_cast<std::size_t>(shape.count()), 0.0);
  return idx;
}

int ParamStore::index_of(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? -1 : it->second;
}

int ParamStore::require(std::string_view name) const {
  int idx = index_of(name);
  if (idx < 0) throw ShapeError("unknown parameter name: " + std::string(name));
  return idx;
}

std::span<double> ParamStore::slice(int idx) {
  const Entry& e = entries_[static_cast<std::size_t>(idx)];
  return {values_.data() + e.offset, static_cast<std::size_t>(e.shape.count())};
}

std::span<const double> ParamStore::slice(int idx) const {
  const Entry& e = entries_[static_cast<std::size_t>(idx)];
  return {values_.data() + e.offset, static_cast<std::size_t>(e.shape.count())};
}

}  // namespace inode::ad
