#pragma once

#include <array>
#include <string>

namespace inode::ad {

// Dense tensor shape, rank 1..3.
struct Shape {
  int rank = 1;
  std::array<int, 3> dim = {1, 1, 1};

  static Shape vec(int n) { return Shape{1, {n, 1, 1}}; }
  static Shape mat(int rows, int cols) { return Shape{2, {rows, cols, 1}}; }
  static Shape cube(int a, int b, int c) { return Shape{3, {a, b, c}}; }
  static Shape scalar() { return vec(1); }

  int count() const {
    int n = 1;
    for (int i = 0; i < rank; ++i) n *= dim[i];
    return n;
  }
  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i)
      if (dim[i] != o.dim[i]) return false;
    return true;
  }
  std::string str() const {
    std::string s = "[";
    for (int i = 0; i < rank; ++i) {
      if (i) s += "x";
      s += std::to_string(dim[i]);
    }
    return s + "]";
  }
};

}  // namespace inode::ad
