#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "inode/params.hpp"
#include "inode/shape.hpp"

namespace inode::ad {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  kLeaf,
  kConst,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAxpy,
  kScale,
  kAddConst,
  kMatvec,
  kAffine,
  kMatmul,
  kTanh,
  kSigmoid,
  kRelu,
  kSoftplus,
  kExp,
  kLog,
  kSqrt,
  kSquare,
  kConcat,
  kSlice,
  kSum,
  kMean,
  kDot,
};

// Reverse-mode tape over dense float64 tensors (rank <= 3). Construction is
// evaluation: every op computes its value immediately and records itself, so
// construction order is a topological order. Single-threaded; one tape per
// worker.
class Tape {
 public:
  using Ref = NodeId;

  explicit Tape(const ParamStore* params = nullptr);

  // Drops all nodes, keeps capacity. Parameter values are re-read on the next
  // param() call, so a reset picks up optimizer updates.
  void reset();

  // Leaf for a named parameter slice; cached, so repeated lookups share one
  // node and gradient contributions accumulate on it.
  NodeId param(int registry_index);
  NodeId param(std::string_view name);
  NodeId constant(std::span<const double> data, Shape shape);
  NodeId constant_vec(std::span<const double> data);
  NodeId scalar(double v);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId axpy(NodeId a, NodeId b, double k);  // a + k*b
  NodeId scale(NodeId a, double k);
  NodeId add_const(NodeId a, double k);
  NodeId affine(NodeId w, NodeId x, NodeId b);  // W x + b
  NodeId matvec(NodeId w, NodeId x);
  NodeId matmul(NodeId a, NodeId b);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId relu(NodeId a);
  NodeId softplus(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId square(NodeId a);
  NodeId concat(NodeId a, NodeId b);
  NodeId slice(NodeId a, int offset, int len);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId dot(NodeId a, NodeId b);

  std::span<const double> value(NodeId id) const;
  double scalar_value(NodeId id) const;
  const Shape& shape(NodeId id) const;
  std::size_t node_count() const { return recs_.size(); }

  // Reverse sweep from a scalar root. Leaf gradients land in param_grad(),
  // aligned with the ParamStore layout; values are left untouched.
  void backward(NodeId root);

  std::span<const double> grad(NodeId id) const;
  const std::vector<double>& param_grad() const { return pgrad_; }
  std::span<const double> param_grad(int registry_index) const;
  std::span<const double> param_grad(std::string_view name) const;

 private:
  struct Rec {
    Op op;
    Shape shape;
    NodeId a = -1, b = -1, c = -1;
    std::int64_t off = 0;  // value arena offset
    double k = 0.0;        // scale / add_const coefficient
    int aux = 0;           // slice offset or param registry index
  };

  NodeId push(Op op, Shape shape, NodeId a, NodeId b, NodeId c, double k, int aux);
  double* out_ptr(const Rec& r) { return val_.data() + r.off; }
  const double* vptr(NodeId id) const { return val_.data() + recs_[static_cast<std::size_t>(id)].off; }
  double* gptr(NodeId id);
  void check_same(const char* op, NodeId a, NodeId b) const;
  const Rec& rec(NodeId id) const { return recs_[static_cast<std::size_t>(id)]; }

  const ParamStore* ps_;
  std::vector<Rec> recs_;
  std::vector<double> val_;
  std::vector<double> grad_;
  std::vector<std::uint8_t> touched_;
  std::vector<double> pgrad_;
  std::vector<NodeId> pcache_;
};

}  // namespace inode::ad
