#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <vector>

#include "inode/errors.hpp"
#include "inode/kernels.hpp"
#include "inode/params.hpp"
#include "inode/shape.hpp"

namespace inode::ad {

// Forward-only engine with the same op set and kernels as Tape. Model code is
// templated on the engine, so a fixed op sequence produces bit-identical
// values on either engine (the build disables FP contraction globally).
class PlainEngine {
 public:
  using Ref = std::int32_t;

  explicit PlainEngine(const ParamStore* params = nullptr) : ps_(params) {
    if (ps_) pcache_.assign(static_cast<std::size_t>(ps_->count()), -1);
  }

  void reset() {
    shapes_.clear();
    offs_.clear();
    val_.clear();
    if (ps_) pcache_.assign(static_cast<std::size_t>(ps_->count()), -1);
  }

  Ref param(int registry_index) {
    if (!ps_) throw ShapeError("plain engine has no parameter store");
    Ref& cached = pcache_[static_cast<std::size_t>(registry_index)];
    if (cached >= 0) return cached;
    const auto& e = ps_->entry(registry_index);
    Ref id = push(e.shape);
    auto src = ps_->slice(registry_index);
    std::memcpy(ptr(id), src.data(), src.size() * sizeof(double));
    cached = id;
    return id;
  }

  Ref param(std::string_view name) { return param(ps_->require(name)); }

  Ref constant(std::span<const double> data, Shape shape) {
    if (static_cast<int>(data.size()) != shape.count()) {
      throw ShapeError("constant: data size " + std::to_string(data.size()) +
                       " does not match shape " + shape.str());
    }
    Ref id = push(shape);
    std::memcpy(ptr(id), data.data(), data.size() * sizeof(double));
    return id;
  }

  Ref constant_vec(std::span<const double> data) {
    return constant(data, Shape::vec(static_cast<int>(data.size())));
  }

  Ref scalar(double v) { return constant({&v, 1}, Shape::scalar()); }

  Ref add(Ref a, Ref b) { return binop("add", a, b, kernels::add); }
  Ref sub(Ref a, Ref b) { return binop("sub", a, b, kernels::sub); }
  Ref mul(Ref a, Ref b) { return binop("mul", a, b, kernels::mul); }
  Ref div(Ref a, Ref b) { return binop("div", a, b, kernels::div); }

  Ref axpy(Ref a, Ref b, double k) {
    check_same("axpy", a, b);
    Ref id = push(shapes_[static_cast<std::size_t>(a)]);
    kernels::axpy(ptr(id), ptr(a), ptr(b), k, shape(id).count());
    return id;
  }

  Ref scale(Ref a, double k) {
    Ref id = push(shapes_[static_cast<std::size_t>(a)]);
    kernels::scale(ptr(id), ptr(a), k, shape(id).count());
    return id;
  }

  Ref add_const(Ref a, double k) {
    Ref id = push(shapes_[static_cast<std::size_t>(a)]);
    kernels::add_const(ptr(id), ptr(a), k, shape(id).count());
    return id;
  }

  Ref matvec(Ref w, Ref x) {
    const Shape ws = shape(w);  // copies: push() may reallocate shapes_
    const Shape xs = shape(x);
    if (ws.rank != 2 || xs.rank != 1 || ws.dim[1] != xs.dim[0]) {
      throw ShapeError("matvec: shape mismatch " + ws.str() + " vs " + xs.str());
    }
    Ref id = push(Shape::vec(ws.dim[0]));
    kernels::matvec(ptr(id), ptr(w), ptr(x), ws.dim[0], ws.dim[1]);
    return id;
  }

  Ref affine(Ref w, Ref x, Ref b) {
    const Shape ws = shape(w);
    const Shape xs = shape(x);
    const Shape bs = shape(b);
    if (ws.rank != 2 || xs.rank != 1 || ws.dim[1] != xs.dim[0] || bs.rank != 1 ||
        bs.dim[0] != ws.dim[0]) {
      throw ShapeError("affine: shape mismatch " + ws.str() + " vs " + xs.str() + " vs " +
                       bs.str());
    }
    Ref id = push(Shape::vec(ws.dim[0]));
    kernels::affine(ptr(id), ptr(w), ptr(x), ptr(b), ws.dim[0], ws.dim[1]);
    return id;
  }

  Ref matmul(Ref a, Ref b) {
    const Shape as = shape(a);
    const Shape bs = shape(b);
    if (as.rank != 2 || bs.rank != 2 || as.dim[1] != bs.dim[0]) {
      throw ShapeError("matmul: shape mismatch " + as.str() + " vs " + bs.str());
    }
    Ref id = push(Shape::mat(as.dim[0], bs.dim[1]));
    kernels::matmul(ptr(id), ptr(a), ptr(b), as.dim[0], as.dim[1], bs.dim[1]);
    return id;
  }

  Ref tanh(Ref a) { return unop(a, kernels::tanh); }
  Ref sigmoid(Ref a) { return unop(a, kernels::sigmoid); }
  Ref relu(Ref a) { return unop(a, kernels::relu); }
  Ref softplus(Ref a) { return unop(a, kernels::softplus); }
  Ref exp(Ref a) { return unop(a, kernels::exp); }
  Ref log(Ref a) { return unop(a, kernels::log); }
  Ref sqrt(Ref a) { return unop(a, kernels::sqrt); }
  Ref square(Ref a) { return unop(a, kernels::square); }

  Ref concat(Ref a, Ref b) {
    const Shape& as = shape(a);
    const Shape& bs = shape(b);
    if (as.rank != 1 || bs.rank != 1) {
      throw ShapeError("concat: rank-1 operands required, got " + as.str() + " and " + bs.str());
    }
    const int na = as.dim[0], nb = bs.dim[0];
    Ref id = push(Shape::vec(na + nb));
    std::memcpy(ptr(id), ptr(a), static_cast<std::size_t>(na) * sizeof(double));
    std::memcpy(ptr(id) + na, ptr(b), static_cast<std::size_t>(nb) * sizeof(double));
    return id;
  }

  Ref slice(Ref a, int offset, int len) {
    const Shape& as = shape(a);
    if (as.rank != 1 || offset < 0 || len < 1 || offset + len > as.dim[0]) {
      throw ShapeError("slice: range [" + std::to_string(offset) + "," +
                       std::to_string(offset + len) + ") out of " + as.str());
    }
    Ref id = push(Shape::vec(len));
    std::memcpy(ptr(id), ptr(a) + offset, static_cast<std::size_t>(len) * sizeof(double));
    return id;
  }

  Ref sum(Ref a) {
    Ref id = push(Shape::scalar());
    *ptr(id) = kernels::sum(ptr(a), shape(a).count());
    return id;
  }

  Ref mean(Ref a) {
    const int n = shape(a).count();
    Ref id = push(Shape::scalar());
    *ptr(id) = kernels::sum(ptr(a), n) / n;
    return id;
  }

  Ref dot(Ref a, Ref b) {
    check_same("dot", a, b);
    Ref id = push(Shape::scalar());
    *ptr(id) = kernels::dot(ptr(a), ptr(b), shape(a).count());
    return id;
  }

  std::span<const double> value(Ref id) const {
    return {val_.data() + offs_[static_cast<std::size_t>(id)],
            static_cast<std::size_t>(shape(id).count())};
  }

  double scalar_value(Ref id) const {
    if (shape(id).count() != 1) {
      throw ShapeError("scalar_value on non-scalar node " + shape(id).str());
    }
    return val_[static_cast<std::size_t>(offs_[static_cast<std::size_t>(id)])];
  }

  const Shape& shape(Ref id) const { return shapes_[static_cast<std::size_t>(id)]; }
  std::size_t node_count() const { return shapes_.size(); }

 private:
  Ref push(Shape shape) {
    shapes_.push_back(shape);
    offs_.push_back(static_cast<std::int64_t>(val_.size()));
    val_.resize(val_.size() + static_cast<std::size_t>(shape.count()));
    return static_cast<Ref>(shapes_.size()) - 1;
  }

  double* ptr(Ref id) { return val_.data() + offs_[static_cast<std::size_t>(id)]; }

  void check_same(const char* op, Ref a, Ref b) const {
    if (!(shape(a) == shape(b))) {
      throw ShapeError(std::string(op) + ": shape mismatch " + shape(a).str() + " vs " +
                       shape(b).str());
    }
  }

  template <typename Fn>
  Ref binop(const char* name, Ref a, Ref b, Fn fn) {
    check_same(name, a, b);
    Ref id = push(shapes_[static_cast<std::size_t>(a)]);
    fn(ptr(id), ptr(a), ptr(b), shape(id).count());
    return id;
  }

  template <typename Fn>
  Ref unop(Ref a, Fn fn) {
    Ref id = push(shapes_[static_cast<std::size_t>(a)]);
    fn(ptr(id), ptr(a), shape(id).count());
    return id;
  }

  const ParamStore* ps_;
  std::vector<Shape> shapes_;
  std::vector<std::int64_t> offs_;
  std::vector<double> val_;
  std::vector<Ref> pcache_;
};

}  // namespace inode::ad
