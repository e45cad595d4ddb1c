#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "inode/shape.hpp"

namespace inode::ad {

// Flat float64 parameter vector with named, shaped slices. Slice layout is
// fixed by registration order; names are unique.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    int offset;
  };

  // Returns the registry index of the new slice.
  int add(std::string_view name, Shape shape);

  int index_of(std::string_view name) const;  // -1 if absent
  int require(std::string_view name) const;   // throws ShapeError if absent

  const Entry& entry(int idx) const { return entries_[static_cast<std::size_t>(idx)]; }
  int count() const { return static_cast<int>(entries_.size()); }
  std::size_t size() const { return values_.size(); }

  std::span<double> slice(int idx);
  std::span<const double> slice(int idx) const;
  std::span<double> slice(std::string_view name) { return slice(require(name)); }
  std::span<const double> slice(std::string_view name) const { return slice(require(name)); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> by_name_;
};

}  // namespace inode::ad
