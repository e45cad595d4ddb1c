#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "inode/errors.hpp"

namespace inode::ode {

// Uniform reporting grid: points at t0 + i*dt for i in [0, n_points).
struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.1;
  int n_points = 2;

  double time(int i) const { return t0 + i * dt; }
  double span() const { return dt * (n_points - 1); }
  void validate() const {
    if (!(dt > 0.0) || n_points < 2) {
      throw ConfigError("time grid requires dt > 0 and n_points >= 2");
    }
  }
};

enum class SolverKind { kEuler, kRk4, kDopri5 };

SolverKind parse_solver_kind(const std::string& name);  // throws ConfigError
const char* solver_kind_name(SolverKind kind);

struct SolverSpec {
  SolverKind kind = SolverKind::kRk4;
  double dt = 0.1;     // substep for fixed-step kinds; ignored by dopri5
  double rtol = 1e-5;  // dopri5 only
  double atol = 1e-6;  // dopri5 only

  void validate() const {
    if (kind == SolverKind::kDopri5) {
      if (!(rtol > 0.0) || !(atol > 0.0)) {
        throw ConfigError("dopri5 requires rtol > 0 and atol > 0");
      }
    } else if (!(dt > 0.0)) {
      throw ConfigError("fixed-step solver requires dt > 0");
    }
  }
};

namespace detail {

template <typename E>
void check_deriv(const E& e, typename E::Ref r, double t) {
  for (double v : e.value(r)) {
    if (!std::isfinite(v)) throw IntegrationError("non-finite derivative", t);
  }
}

}  // namespace detail

// One explicit Euler step x + dt*f(x). `f(engine, state) -> derivative`; the
// field is autonomous, matching the time-invariant dynamics used throughout.
template <typename E, typename F>
typename E::Ref step_euler(E& e, F&& f, typename E::Ref x, double dt, double t = 0.0) {
  auto k1 = f(e, x);
  detail::check_deriv(e, k1, t);
  return e.axpy(x, k1, dt);
}

// Classical 4-stage Runge-Kutta step.
template <typename E, typename F>
typename E::Ref step_rk4(E& e, F&& f, typename E::Ref x, double dt, double t = 0.0) {
  auto k1 = f(e, x);
  detail::check_deriv(e, k1, t);
  auto k2 = f(e, e.axpy(x, k1, dt / 2.0));
  detail::check_deriv(e, k2, t + dt / 2.0);
  auto k3 = f(e, e.axpy(x, k2, dt / 2.0));
  detail::check_deriv(e, k3, t + dt / 2.0);
  auto k4 = f(e, e.axpy(x, k3, dt));
  detail::check_deriv(e, k4, t + dt);
  auto acc = e.axpy(k1, k2, 2.0);
  acc = e.axpy(acc, k3, 2.0);
  acc = e.add(acc, k4);
  return e.axpy(x, acc, dt / 6.0);
}

namespace detail {

// Dormand-Prince 5(4) tableau.
inline constexpr double kA21 = 1.0 / 5.0;
inline constexpr double kA31 = 3.0 / 40.0, kA32 = 9.0 / 40.0;
inline constexpr double kA41 = 44.0 / 45.0, kA42 = -56.0 / 15.0, kA43 = 32.0 / 9.0;
inline constexpr double kA51 = 19372.0 / 6561.0, kA52 = -25360.0 / 2187.0,
                        kA53 = 64448.0 / 6561.0, kA54 = -212.0 / 729.0;
inline constexpr double kA61 = 9017.0 / 3168.0, kA62 = -355.0 / 33.0, kA63 = 46732.0 / 5247.0,
                        kA64 = 49.0 / 176.0, kA65 = -5103.0 / 18656.0;
// 5th-order weights (also the FSAL a7 row; b2 = b7 = 0).
inline constexpr double kB1 = 35.0 / 384.0, kB3 = 500.0 / 1113.0, kB4 = 125.0 / 192.0,
                        kB5 = -2187.0 / 6784.0, kB6 = 11.0 / 84.0;
// b - b_hat, for the embedded 4th-order error estimate.
inline constexpr double kE1 = 71.0 / 57600.0, kE3 = -71.0 / 16695.0, kE4 = 71.0 / 1920.0,
                        kE5 = -17253.0 / 339200.0, kE6 = 22.0 / 525.0, kE7 = -1.0 / 40.0;
// Dense-output coefficients (Hairer, Norsett & Wanner, DOPRI5).
inline constexpr double kD1 = -12715105075.0 / 11282082432.0;
inline constexpr double kD3 = 87487479700.0 / 32700410799.0;
inline constexpr double kD4 = -10690763975.0 / 1880347072.0;
inline constexpr double kD5 = 701980252875.0 / 199316789632.0;
inline constexpr double kD6 = -1453857185.0 / 822651844.0;
inline constexpr double kD7 = 69997945.0 / 29380423.0;

// Starting step size for dopri5 (standard order-5 heuristic; controller math
// runs on plain values, so engines agree on every acceptance decision).
template <typename E>
double initial_step(E& e, typename E::Ref y0, typename E::Ref f0, double span, double rtol,
                    double atol) {
  auto yv = e.value(y0);
  auto fv = e.value(f0);
  const int n = static_cast<int>(yv.size());
  double d0 = 0.0, d1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double sc = atol + rtol * std::abs(yv[i]);
    d0 += (yv[i] / sc) * (yv[i] / sc);
    d1 += (fv[i] / sc) * (fv[i] / sc);
  }
  d0 = std::sqrt(d0 / n);
  d1 = std::sqrt(d1 / n);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * (d0 / d1);
  h0 = std::min(h0, span);
  return std::max(h0, 1e-10 * span);
}

}  // namespace detail

// Adaptive Dormand-Prince 5(4) with FSAL and dense output at grid points.
// Acceptance decisions and step sizes are plain doubles (constants w.r.t. the
// tape); rejected trial steps merely leave dead nodes behind.
template <typename E, typename F>
std::vector<typename E::Ref> integrate_dopri5(E& e, F&& f, typename E::Ref x0,
                                              const TimeGrid& grid, const SolverSpec& spec) {
  using Ref = typename E::Ref;
  const double t_end = grid.time(grid.n_points - 1);
  const double span = t_end - grid.t0;
  const double rtol = spec.rtol, atol = spec.atol;
  const int n = e.shape(x0).count();

  std::vector<Ref> states;
  states.reserve(static_cast<std::size_t>(grid.n_points));
  states.push_back(x0);

  double t = grid.t0;
  Ref y = x0;
  Ref k1 = f(e, y);
  detail::check_deriv(e, k1, t);
  double h = detail::initial_step(e, y, k1, span, rtol, atol);
  int g = 1;  // next grid index to emit
  bool rejected = false;
  long steps = 0;

  while (g < grid.n_points) {
    if (h < 1e-12 * span) throw IntegrationError("dopri5 step size underflow (stiff?)", t);
    if (++steps > 1000000) throw IntegrationError("dopri5 step limit exceeded", t);
    h = std::min(h, t_end - t);

    using detail::kA21, detail::kA31, detail::kA32, detail::kA41, detail::kA42, detail::kA43;
    using detail::kA51, detail::kA52, detail::kA53, detail::kA54;
    using detail::kA61, detail::kA62, detail::kA63, detail::kA64, detail::kA65;
    using detail::kB1, detail::kB3, detail::kB4, detail::kB5, detail::kB6;
    using detail::kE1, detail::kE3, detail::kE4, detail::kE5, detail::kE6, detail::kE7;

    auto k2 = f(e, e.axpy(y, k1, h * kA21));
    detail::check_deriv(e, k2, t);
    auto s3 = e.axpy(e.axpy(y, k1, h * kA31), k2, h * kA32);
    auto k3 = f(e, s3);
    detail::check_deriv(e, k3, t);
    auto s4 = e.axpy(e.axpy(e.axpy(y, k1, h * kA41), k2, h * kA42), k3, h * kA43);
    auto k4 = f(e, s4);
    detail::check_deriv(e, k4, t);
    auto s5 = e.axpy(e.axpy(e.axpy(e.axpy(y, k1, h * kA51), k2, h * kA52), k3, h * kA53), k4,
                     h * kA54);
    auto k5 = f(e, s5);
    detail::check_deriv(e, k5, t);
    auto s6 = e.axpy(
        e.axpy(e.axpy(e.axpy(e.axpy(y, k1, h * kA61), k2, h * kA62), k3, h * kA63), k4, h * kA64),
        k5, h * kA65);
    auto k6 = f(e, s6);
    detail::check_deriv(e, k6, t);
    auto y1 = e.axpy(e.axpy(e.axpy(e.axpy(e.axpy(y, k1, h * kB1), k3, h * kB3), k4, h * kB4), k5,
                            h * kB5),
                     k6, h * kB6);
    auto k7 = f(e, y1);
    detail::check_deriv(e, k7, t + h);

    // Embedded error estimate, in plain arithmetic off the value arena.
    auto v = [&](Ref r) { return e.value(r); };
    double err = 0.0;
    {
      auto vy = v(y), vy1 = v(y1);
      auto v1 = v(k1), v3 = v(k3), v4 = v(k4), v5 = v(k5), v6 = v(k6), v7 = v(k7);
      for (int i = 0; i < n; ++i) {
        const double ei =
            h * (kE1 * v1[i] + kE3 * v3[i] + kE4 * v4[i] + kE5 * v5[i] + kE6 * v6[i] +
                 kE7 * v7[i]);
        const double sc = atol + rtol * std::max(std::abs(vy[i]), std::abs(vy1[i]));
        err += (ei / sc) * (ei / sc);
      }
      err = std::sqrt(err / n);
    }

    const double safety = 0.9, fac_min = 0.2;
    if (err <= 1.0) {
      const double t_new = t + h;
      // Dense output for grid points inside (t, t_new]; coefficients are
      // built lazily, only when a step actually contains grid points.
      bool have_cont = false;
      Ref r2{}, r3{}, r4{}, r5{};
      while (g < grid.n_points && grid.time(g) <= t_new + 1e-12 * span) {
        const double theta = (grid.time(g) - t) / h;
        if (theta >= 1.0 - 1e-12) {
          states.push_back(y1);
        } else {
          if (!have_cont) {
            using detail::kD1, detail::kD3, detail::kD4, detail::kD5, detail::kD6, detail::kD7;
            r2 = e.sub(y1, y);               // ydiff
            r3 = e.axpy(e.scale(k1, h), r2, -1.0);  // bspl
            r4 = e.axpy(e.axpy(r2, k7, -h), r3, -1.0);
            r5 = e.axpy(
                e.axpy(e.axpy(e.axpy(e.axpy(e.scale(k1, h * kD1), k3, h * kD3), k4, h * kD4), k5,
                              h * kD5),
                       k6, h * kD6),
                k7, h * kD7);
            have_cont = true;
          }
          auto inner = e.axpy(r4, r5, 1.0 - theta);
          auto mid = e.axpy(r3, inner, theta);
          auto outer = e.axpy(r2, mid, 1.0 - theta);
          states.push_back(e.axpy(y, outer, theta));
        }
        ++g;
      }
      t = t_new;
      y = y1;
      k1 = k7;  // FSAL
      const double fac_max = rejected ? 1.0 : 10.0;
      const double fac =
          err == 0.0 ? fac_max
                     : std::min(fac_max, std::max(fac_min, safety * std::pow(err, -0.2)));
      h *= fac;
      rejected = false;
    } else {
      h *= std::max(fac_min, safety * std::pow(err, -0.2));
      rejected = true;
    }
  }
  return states;
}

// Integrates f from x0 across the grid, returning one state per grid point
// (states[0] is x0 itself). Fixed-step kinds take exactly grid.dt/spec.dt
// substeps per interval; spec.dt must divide the grid spacing.
template <typename E, typename F>
std::vector<typename E::Ref> integrate(E& e, F&& f, typename E::Ref x0, const TimeGrid& grid,
                                       const SolverSpec& spec) {
  grid.validate();
  spec.validate();
  if (spec.kind == SolverKind::kDopri5) return integrate_dopri5(e, f, x0, grid, spec);

  const double n_sub_real = grid.dt / spec.dt;
  const int n_sub = static_cast<int>(std::lround(n_sub_real));
  if (n_sub < 1 || std::abs(n_sub_real - n_sub) > 1e-9 * n_sub_real) {
    throw ConfigError("solver dt " + std::to_string(spec.dt) +
                      " does not divide the grid spacing " + std::to_string(grid.dt));
  }
  const double h = grid.dt / n_sub;

  std::vector<typename E::Ref> states;
  states.reserve(static_cast<std::size_t>(grid.n_points));
  states.push_back(x0);
  auto y = x0;
  for (int i = 1; i < grid.n_points; ++i) {
    for (int s = 0; s < n_sub; ++s) {
      const double t = grid.time(i - 1) + s * h;
      y = spec.kind == SolverKind::kEuler ? step_euler(e, f, y, h, t) : step_rk4(e, f, y, h, t);
    }
    states.push_back(y);
  }
  return states;
}

}  // namespace inode::ode
