#pragma once

// Independent numerical oracles shared by the unit and acceptance tests.
// Everything here is deliberately naive: central finite differences against
// the tape, closed-form reference solutions against the solvers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "inode/params.hpp"

namespace oracles {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

// Central-difference gradient of a scalar function of the parameter vector.
// `f` must re-read the store on every call (fresh tape / plain pass).
template <typename F>
std::vector<double> fd_grad(inode::ad::ParamStore& ps, F f, double h = 1e-5) {
  std::vector<double>& v = ps.values();
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double orig = v[i];
    v[i] = orig + h;
    const double fp = f();
    v[i] = orig - h;
    const double fm = f();
    v[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace oracles
