#include "inode/odeint.hpp"

namespace inode::ode {

SolverKind parse_solver_kind(const std::string& name) {
  if (name == "euler") return SolverKind::kEuler;
  if (name == "rk4") return SolverKind::kRk4;
  if (name == "dopri5") return SolverKind::kDopri5;
  throw ConfigError("unknown solver kind '" + name + "' (expected euler, rk4, or dopri5)");
}

const char* solver_kind_name(SolverKind kind) {
  switch (kind) {
    case SolverKind::kEuler: return "euler";
    case SolverKind::kRk4: return "rk4";
    case SolverKind::kDopri5: return "dopri5";
  }
  return "?";
}

}  // namespace inode::ode
