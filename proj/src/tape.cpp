#include "inode/tape.hpp"

#include <cmath>
#include <cstring>

#include "inode/errors.hpp"
#include "inode/kernels.hpp"

namespace inode::ad {

namespace k = kernels;

Tape::Tape(const ParamStore* params) : ps_(params) {
  if (ps_) pcache_.assign(static_cast<std::size_t>(ps_->count()), -1);
}

void Tape::reset() {
  recs_.clear();
  val_.clear();
  if (ps_) pcache_.assign(static_cast<std::size_t>(ps_->count()), -1);
}

NodeId Tape::push(Op op, Shape shape, NodeId a, NodeId b, NodeId c, double kk, int aux) {
  Rec r;
  r.op = op;
  r.shape = shape;
  r.a = a;
  r.b = b;
  r.c = c;
  r.k = kk;
  r.aux = aux;
  r.off = static_cast<std::int64_t>(val_.size());
  val_.resize(val_.size() + static_cast<std::size_t>(shape.count()));
  recs_.push_back(r);
  return static_cast<NodeId>(recs_.size()) - 1;
}

NodeId Tape::param(int registry_index) {
  if (!ps_) throw ShapeError("tape has no parameter store");
  NodeId& cached = pcache_[static_cast<std::size_t>(registry_index)];
  if (cached >= 0) return cached;
  const auto& e = ps_->entry(registry_index);
  NodeId id = push(Op::kLeaf, e.shape, -1, -1, -1, 0.0, registry_index);
  auto src = ps_->slice(registry_index);
  std::memcpy(out_ptr(rec(id)), src.data(), src.size() * sizeof(double));
  cached = id;
  return id;
}

NodeId Tape::param(std::string_view name) { return param(ps_->require(name)); }

NodeId Tape::constant(std::span<const double> data, Shape shape) {
  if (static_cast<int>(data.size()) != shape.count()) {
    throw ShapeError("constant: data size " + std::to_string(data.size()) +
                     " does not match shape " + shape.str());
  }
  NodeId id = push(Op::kConst, shape, -1, -1, -1, 0.0, 0);
  std::memcpy(out_ptr(rec(id)), data.data(), data.size() * sizeof(double));
  return id;
}

NodeId Tape::constant_vec(std::span<const double> data) {
  return constant(data, Shape::vec(static_cast<int>(data.size())));
}

NodeId Tape::scalar(double v) { return constant({&v, 1}, Shape::scalar()); }

void Tape::check_same(const char* op, NodeId a, NodeId b) const {
  if (!(rec(a).shape == rec(b).shape)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + rec(a).shape.str() + " vs " +
                     rec(b).shape.str());
  }
}

#define INODE_BINOP(NAME, OPTAG, KERNEL)                                   \
  NodeId Tape::NAME(NodeId a, NodeId b) {                                  \
    check_same(#NAME, a, b);                                               \
    const Shape s = rec(a).shape;                                          \
    NodeId id = push(Op::OPTAG, s, a, b, -1, 0.0, 0);                      \
    k::KERNEL(out_ptr(rec(id)), vptr(a), vptr(b), s.count());              \
    return id;                                                             \
  }

INODE_BINOP(add, kAdd, add)
INODE_BINOP(sub, kSub, sub)
INODE_BINOP(mul, kMul, mul)
INODE_BINOP(div, kDiv, div)
#undef INODE_BINOP

NodeId Tape::axpy(NodeId a, NodeId b, double kk) {
  check_same("axpy", a, b);
  const Shape s = rec(a).shape;
  NodeId id = push(Op::kAxpy, s, a, b, -1, kk, 0);
  k::axpy(out_ptr(rec(id)), vptr(a), vptr(b), kk, s.count());
  return id;
}

NodeId Tape::scale(NodeId a, double kk) {
  const Shape s = rec(a).shape;
  NodeId id = push(Op::kScale, s, a, -1, -1, kk, 0);
  k::scale(out_ptr(rec(id)), vptr(a), kk, s.count());
  return id;
}

NodeId Tape::add_const(NodeId a, double kk) {
  const Shape s = rec(a).shape;
  NodeId id = push(Op::kAddConst, s, a, -1, -1, kk, 0);
  k::add_const(out_ptr(rec(id)), vptr(a), kk, s.count());
  return id;
}

NodeId Tape::matvec(NodeId w, NodeId x) {
  const Shape ws = rec(w).shape;  // copies: push() may reallocate the node vector
  const Shape xs = rec(x).shape;
  if (ws.rank != 2 || xs.rank != 1 || ws.dim[1] != xs.dim[0]) {
    throw ShapeError("matvec: shape mismatch " + ws.str() + " vs " + xs.str());
  }
  NodeId id = push(Op::kMatvec, Shape::vec(ws.dim[0]), w, x, -1, 0.0, 0);
  k::matvec(out_ptr(rec(id)), vptr(w), vptr(x), ws.dim[0], ws.dim[1]);
  return id;
}

NodeId Tape::affine(NodeId w, NodeId x, NodeId b) {
  const Shape ws = rec(w).shape;
  const Shape xs = rec(x).shape;
  const Shape bs = rec(b).shape;
  if (ws.rank != 2 || xs.rank != 1 || ws.dim[1] != xs.dim[0] || bs.rank != 1 ||
      bs.dim[0] != ws.dim[0]) {
    throw ShapeError("affine: shape mismatch " + ws.str() + " vs " + xs.str() + " vs " + bs.str());
  }
  NodeId id = push(Op::kAffine, Shape::vec(ws.dim[0]), w, x, b, 0.0, 0);
  k::affine(out_ptr(rec(id)), vptr(w), vptr(x), vptr(b), ws.dim[0], ws.dim[1]);
  return id;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Shape as = rec(a).shape;
  const Shape bs = rec(b).shape;
  if (as.rank != 2 || bs.rank != 2 || as.dim[1] != bs.dim[0]) {
    throw ShapeError("matmul: shape mismatch " + as.str() + " vs " + bs.str());
  }
  NodeId id = push(Op::kMatmul, Shape::mat(as.dim[0], bs.dim[1]), a, b, -1, 0.0, 0);
  k::matmul(out_ptr(rec(id)), vptr(a), vptr(b), as.dim[0], as.dim[1], bs.dim[1]);
  return id;
}

#define INODE_UNOP(NAME, OPTAG, KERNEL)                       \
  NodeId Tape::NAME(NodeId a) {                               \
    const Shape s = rec(a).shape;                             \
    NodeId id = push(Op::OPTAG, s, a, -1, -1, 0.0, 0);        \
    k::KERNEL(out_ptr(rec(id)), vptr(a), s.count());          \
    return id;                                                \
  }

INODE_UNOP(tanh, kTanh, tanh)
INODE_UNOP(sigmoid, kSigmoid, sigmoid)
INODE_UNOP(relu, kRelu, relu)
INODE_UNOP(softplus, kSoftplus, softplus)
INODE_UNOP(exp, kExp, exp)
INODE_UNOP(log, kLog, log)
INODE_UNOP(sqrt, kSqrt, sqrt)
INODE_UNOP(square, kSquare, square)
#undef INODE_UNOP

NodeId Tape::concat(NodeId a, NodeId b) {
  const Shape& as = rec(a).shape;
  const Shape& bs = rec(b).shape;
  if (as.rank != 1 || bs.rank != 1) {
    throw ShapeError("concat: rank-1 operands required, got " + as.str() + " and " + bs.str());
  }
  const int na = as.dim[0], nb = bs.dim[0];
  NodeId id = push(Op::kConcat, Shape::vec(na + nb), a, b, -1, 0.0, 0);
  double* out = out_ptr(rec(id));
  std::memcpy(out, vptr(a), static_cast<std::size_t>(na) * sizeof(double));
  std::memcpy(out + na, vptr(b), static_cast<std::size_t>(nb) * sizeof(double));
  return id;
}

NodeId Tape::slice(NodeId a, int offset, int len) {
  const Shape& as = rec(a).shape;
  if (as.rank != 1 || offset < 0 || len < 1 || offset + len > as.dim[0]) {
    throw ShapeError("slice: range [" + std::to_string(offset) + "," +
                     std::to_string(offset + len) + ") out of " + as.str());
  }
  NodeId id = push(Op::kSlice, Shape::vec(len), a, -1, -1, 0.0, offset);
  std::memcpy(out_ptr(rec(id)), vptr(a) + offset, static_cast<std::size_t>(len) * sizeof(double));
  return id;
}

NodeId Tape::sum(NodeId a) {
  NodeId id = push(Op::kSum, Shape::scalar(), a, -1, -1, 0.0, 0);
  *out_ptr(rec(id)) = k::sum(vptr(a), rec(a).shape.count());
  return id;
}

NodeId Tape::mean(NodeId a) {
  const int n = rec(a).shape.count();
  NodeId id = push(Op::kMean, Shape::scalar(), a, -1, -1, 0.0, 0);
  *out_ptr(rec(id)) = k::sum(vptr(a), n) / n;
  return id;
}

NodeId Tape::dot(NodeId a, NodeId b) {
  check_same("dot", a, b);
  NodeId id = push(Op::kDot, Shape::scalar(), a, b, -1, 0.0, 0);
  *out_ptr(rec(id)) = k::dot(vptr(a), vptr(b), rec(a).shape.count());
  return id;
}

std::span<const double> Tape::value(NodeId id) const {
  const Rec& r = rec(id);
  return {val_.data() + r.off, static_cast<std::size_t>(r.shape.count())};
}

double Tape::scalar_value(NodeId id) const {
  const Rec& r = rec(id);
  if (r.shape.count() != 1) throw ShapeError("scalar_value on non-scalar node " + r.shape.str());
  return val_[static_cast<std::size_t>(r.off)];
}

const Shape& Tape::shape(NodeId id) const { return rec(id).shape; }

double* Tape::gptr(NodeId id) {
  touched_[static_cast<std::size_t>(id)] = 1;
  return grad_.data() + rec(id).off;
}

std::span<const double> Tape::grad(NodeId id) const {
  const Rec& r = rec(id);
  return {grad_.data() + r.off, static_cast<std::size_t>(r.shape.count())};
}

std::span<const double> Tape::param_grad(int registry_index) const {
  const auto& e = ps_->entry(registry_index);
  return {pgrad_.data() + e.offset, static_cast<std::size_t>(e.shape.count())};
}

std::span<const double> Tape::param_grad(std::string_view name) const {
  return param_grad(ps_->require(name));
}

void Tape::backward(NodeId root) {
  if (root < 0 || static_cast<std::size_t>(root) >= recs_.size()) {
    throw ShapeError("backward: invalid root node");
  }
  if (rec(root).shape.count() != 1) {
    throw ShapeError("backward: root must be scalar, got " + rec(root).shape.str());
  }
  grad_.assign(val_.size(), 0.0);
  touched_.assign(recs_.size(), 0);
  pgrad_.assign(ps_ ? ps_->size() : 0, 0.0);
  grad_[static_cast<std::size_t>(rec(root).off)] = 1.0;
  touched_[static_cast<std::size_t>(root)] = 1;

  for (NodeId i = root; i >= 0; --i) {
    if (!touched_[static_cast<std::size_t>(i)]) continue;
    const Rec& r = rec(i);
    const double* g = grad_.data() + r.off;
    const int n = r.shape.count();
    switch (r.op) {
      case Op::kConst:
        break;
      case Op::kLeaf: {
        const auto& e = ps_->entry(r.aux);
        double* pg = pgrad_.data() + e.offset;
        for (int t = 0; t < n; ++t) pg[t] += g[t];
        break;
      }
      case Op::kAdd: {
        double* ga = gptr(r.a);
        double* gb = gptr(r.b);
        for (int t = 0; t < n; ++t) {
          ga[t] += g[t];
          gb[t] += g[t];
        }
        break;
      }
      case Op::kSub: {
        double* ga = gptr(r.a);
        double* gb = gptr(r.b);
        for (int t = 0; t < n; ++t) {
          ga[t] += g[t];
          gb[t] -= g[t];
        }
        break;
      }
      case Op::kMul: {
        double* ga = gptr(r.a);
        double* gb = gptr(r.b);
        const double* pa = vptr(r.a);
        const double* pb = vptr(r.b);
        for (int t = 0; t < n; ++t) {
          ga[t] += g[t] * pb[t];
          gb[t] += g[t] * pa[t];
        }
        break;
      }
      case Op::kDiv: {
        double* ga = gptr(r.a);
        double* gb = gptr(r.b);
        const double* pb = vptr(r.b);
        const double* y = vptr(i);
        for (int t = 0; t < n; ++t) {
          ga[t] += g[t] / pb[t];
          gb[t] -= g[t] * y[t] / pb[t];
        }
        break;
      }
      case Op::kAxpy: {
        double* ga = gptr(r.a);
        double* gb = gptr(r.b);
        for (int t = 0; t < n; ++t) {
          ga[t] += g[t];
          gb[t] += r.k * g[t];
        }
        break;
      }
      case Op::kScale: {
        double* ga = gptr(r.a);
        for (int t = 0; t < n; ++t) ga[t] += r.k * g[t];
        break;
      }
      case Op::kAddConst: {
        double* ga = gptr(r.a);
        for (int t = 0; t < n; ++t) ga[t] += g[t];
        break;
      }
      case Op::kMatvec:
      case Op::kAffine: {
        const int m = rec(r.a).shape.dim[0];
        const int nn = rec(r.a).shape.dim[1];
        double* gw = gptr(r.a);
        double* gx = gptr(r.b);
        const double* w = vptr(r.a);
        const double* x = vptr(r.b);
        for (int row = 0; row < m; ++row) {
          const double gi = g[row];
          double* gwrow = gw + static_cast<std::ptrdiff_t>(row) * nn;
          const double* wrow = w + static_cast<std::ptrdiff_t>(row) * nn;
          for (int col = 0; col < nn; ++col) {
            gwrow[col] += gi * x[col];
            gx[col] += wrow[col] * gi;
          }
        }
        if (r.op == Op::kAffine) {
          double* gb = gptr(r.c);
          for (int row = 0; row < m; ++row) gb[row] += g[row];
        }
        break;
      }
      case Op::kMatmul: {
        const int m = rec(r.a).shape.dim[0];
        const int kk = rec(r.a).shape.dim[1];
        const int nn = rec(r.b).shape.dim[1];
        double* ga = gptr(r.a);
        double* gb = gptr(r.b);
        const double* a = vptr(r.a);
        const double* b = vptr(r.b);
        for (int row = 0; row < m; ++row) {
          for (int p = 0; p < kk; ++p) {
            double acc = 0.0;
            for (int col = 0; col < nn; ++col) acc += g[row * nn + col] * b[p * nn + col];
            ga[row * kk + p] += acc;
          }
        }
        for (int p = 0; p < kk; ++p) {
          for (int col = 0; col < nn; ++col) {
            double acc = 0.0;
            for (int row = 0; row < m; ++row) acc += a[row * kk + p] * g[row * nn + col];
            gb[p * nn + col] += acc;
          }
        }
        break;
      }
      case Op::kTanh: {
        double* ga = gptr(r.a);
        const double* y = vptr(i);
        for (int t = 0; t < n; ++t) ga[t] += g[t] * (1.0 - y[t] * y[t]);
        break;
      }
      case Op::kSigmoid: {
        double* ga = gptr(r.a);
        const double* y = vptr(i);
        for (int t = 0; t < n; ++t) ga[t] += g[t] * y[t] * (1.0 - y[t]);
        break;
      }
      case Op::kRelu: {
        double* ga = gptr(r.a);
        const double* pa = vptr(r.a);
        for (int t = 0; t < n; ++t) ga[t] += pa[t] > 0.0 ? g[t] : 0.0;
        break;
      }
      case Op::kSoftplus: {
        double* ga = gptr(r.a);
        const double* pa = vptr(r.a);
        for (int t = 0; t < n; ++t) ga[t] += g[t] * k::sigmoid1(pa[t]);
        break;
      }
      case Op::kExp: {
        double* ga = gptr(r.a);
        const double* y = vptr(i);
        for (int t = 0; t < n; ++t) ga[t] += g[t] * y[t];
        break;
      }
      case Op::kLog: {
        double* ga = gptr(r.a);
        const double* pa = vptr(r.a);
        for (int t = 0; t < n; ++t) ga[t] += g[t] / pa[t];
        break;
      }
      case Op::kSqrt: {
        double* ga = gptr(r.a);
        const double* y = vptr(i);
        for (int t = 0; t < n; ++t) ga[t] += g[t] / (2.0 * y[t]);
        break;
      }
      case Op::kSquare: {
        double* ga = gptr(r.a);
        const double* pa = vptr(r.a);
        for (int t = 0; t < n; ++t) ga[t] += 2.0 * pa[t] * g[t];
        break;
      }
      case Op::kConcat: {
        const int na = rec(r.a).shape.dim[0];
        const int nb = rec(r.b).shape.dim[0];
        double* ga = gptr(r.a);
        double* gb = gptr(r.b);
        for (int t = 0; t < na; ++t) ga[t] += g[t];
        for (int t = 0; t < nb; ++t) gb[t] += g[na + t];
        break;
      }
      case Op::kSlice: {
        double* ga = gptr(r.a);
        for (int t = 0; t < n; ++t) ga[r.aux + t] += g[t];
        break;
      }
      case Op::kSum: {
        double* ga = gptr(r.a);
        const int pn = rec(r.a).shape.count();
        const double g0 = g[0];
        for (int t = 0; t < pn; ++t) ga[t] += g0;
        break;
      }
      case Op::kMean: {
        double* ga = gptr(r.a);
        const int pn = rec(r.a).shape.count();
        const double g0 = g[0] / pn;
        for (int t = 0; t < pn; ++t) ga[t] += g0;
        break;
      }
      case Op::kDot: {
        double* ga = gptr(r.a);
        double* gb = gptr(r.b);
        const double* pa = vptr(r.a);
        const double* pb = vptr(r.b);
        const int pn = rec(r.a).shape.count();
        const double g0 = g[0];
        for (int t = 0; t < pn; ++t) {
          ga[t] += g0 * pb[t];
          gb[t] += g0 * pa[t];
        }
        break;
      }
    }
  }
}

}  // namespace inode::ad
