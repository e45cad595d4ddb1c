#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "inode/errors.hpp"
#include "inode/nets.hpp"
#include "inode/plain.hpp"
#include "inode/rng.hpp"
#include "inode/tape.hpp"
#include "oracles.hpp"

using inode::ConfigError;
using inode::Rng;
using inode::ad::ParamStore;
using inode::ad::PlainEngine;
using inode::ad::Shape;
using inode::ad::Tape;
using namespace inode::net;

namespace {

std::vector<double> random_vec(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("mlp with zero parameters outputs zero through tanh") {
  ParamStore ps;
  auto mlp = Mlp::create(ps, "f", MlpSpec{{3, 8, 2}, Activation::kTanh, Activation::kNone});
  // ParamStore zero-initializes; do not call init_params.
  PlainEngine e(&ps);
  auto y = e.value(mlp.forward(e, e.constant_vec(std::vector<double>{0.4, -1.0, 2.0})));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
}

TEST_CASE("mlp with identity weights passes input through") {
  ParamStore ps;
  auto mlp = Mlp::create(ps, "f", MlpSpec{{3, 3, 3}, Activation::kNone, Activation::kNone});
  for (int l = 0; l < 2; ++l) {
    auto w = ps.slice(mlp.w_idx[static_cast<std::size_t>(l)]);
    for (int i = 0; i < 3; ++i) w[static_cast<std::size_t>(4 * i)] = 1.0;
  }
  PlainEngine e(&ps);
  const std::vector<double> x{0.7, -2.5, 3.25};
  auto y = e.value(mlp.forward(e, e.constant_vec(x)));
  for (int i = 0; i < 3; ++i) CHECK(y[static_cast<std::size_t>(i)] == x[static_cast<std::size_t>(i)]);
}

TEST_CASE("mlp gradients match finite differences for every activation") {
  for (Activation act : {Activation::kTanh, Activation::kRelu, Activation::kSoftplus}) {
    ParamStore ps;
    auto mlp = Mlp::create(ps, "f", MlpSpec{{4, 6, 3}, act, Activation::kNone});
    init_params(ps, 11 + static_cast<std::uint64_t>(act));
    Rng rng(5);
    auto x = random_vec(rng, 4);
    auto w = random_vec(rng, 3);

    auto build = [&](Tape& t) {
      return t.dot(mlp.forward(t, t.constant_vec(x)), t.constant_vec(w));
    };
    Tape tape(&ps);
    tape.backward(build(tape));
    std::vector<double> got(tape.param_grad());
    auto fd = oracles::fd_grad(ps, [&] {
      Tape probe(&ps);
      return probe.scalar_value(build(probe));
    });
    CHECK(oracles::max_rel_err(got, fd) < 1e-4);  // spec tolerance; observed ~1e-9
  }
}

TEST_CASE("gru encode matches a hand-rolled recurrence oracle") {
  ParamStore ps;
  auto gru = Gru::create(ps, "g", GruSpec{2, 5, 3});
  init_params(ps, 21);
  // Give the zero biases some life so gates are off-center.
  {
    Rng rng(99);
    for (double& v : ps.slice(gru.b)) v = rng.uniform(-0.5, 0.5);
    for (double& v : ps.slice(gru.b_out)) v = rng.uniform(-0.5, 0.5);
  }

  const int T = 4, D = 2, H = 5;
  Rng rng(3);
  std::vector<std::vector<double>> frames;
  for (int i = 0; i < T; ++i) frames.push_back(random_vec(rng, D));

  // Oracle: naive loops, reverse time order, h(0) = 0.
  auto matvec = [](std::span<const double> m, const std::vector<double>& v, int rows, int cols) {
    std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
    for (int i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < cols; ++j) acc += m[static_cast<std::size_t>(i * cols + j)] * v[static_cast<std::size_t>(j)];
      out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
  };
  auto wx = ps.slice(gru.wx);
  auto wh = ps.slice(gru.wh);
  auto b = ps.slice(gru.b);
  std::vector<double> h(H, 0.0);
  for (int i = T - 1; i >= 0; --i) {
    auto gx = matvec(wx, frames[static_cast<std::size_t>(i)], 3 * H, D);
    for (int j = 0; j < 3 * H; ++j) gx[static_cast<std::size_t>(j)] += b[static_cast<std::size_t>(j)];
    auto gh = matvec(wh, h, 3 * H, H);
    std::vector<double> hn(H);
    for (int j = 0; j < H; ++j) {
      const double z = 1.0 / (1.0 + std::exp(-(gx[static_cast<std::size_t>(j)] + gh[static_cast<std::size_t>(j)])));
      const double r = 1.0 / (1.0 + std::exp(-(gx[static_cast<std::size_t>(H + j)] + gh[static_cast<std::size_t>(H + j)])));
      const double n = std::tanh(gx[static_cast<std::size_t>(2 * H + j)] + r * gh[static_cast<std::size_t>(2 * H + j)]);
      hn[static_cast<std::size_t>(j)] = n + z * (h[static_cast<std::size_t>(j)] - n);
    }
    h = hn;
  }
  auto w_out = ps.slice(gru.w_out);
  auto expect = matvec(w_out, h, 3, H);
  for (int j = 0; j < 3; ++j) expect[static_cast<std::size_t>(j)] += ps.slice(gru.b_out)[static_cast<std::size_t>(j)];

  PlainEngine e(&ps);
  std::vector<PlainEngine::Ref> refs;
  for (const auto& f : frames) refs.push_back(e.constant_vec(f));
  auto got = e.value(gru.encode(e, refs));
  for (int j = 0; j < 3; ++j) {
    CHECK(got[static_cast<std::size_t>(j)] ==
          doctest::Approx(expect[static_cast<std::size_t>(j)]).epsilon(1e-12));
  }
}

TEST_CASE("gru encoding is deterministic, finite, and order-sensitive") {
  ParamStore ps;
  auto gru = Gru::create(ps, "g", GruSpec{1, 8, 4});
  init_params(ps, 33);
  Rng rng(8);
  std::vector<std::vector<double>> frames;
  for (int i = 0; i < 6; ++i) frames.push_back(random_vec(rng, 1));

  auto run = [&](const std::vector<std::vector<double>>& fs) {
    PlainEngine e(&ps);
    std::vector<PlainEngine::Ref> refs;
    for (const auto& f : fs) refs.push_back(e.constant_vec(f));
    auto v = e.value(gru.encode(e, refs));
    return std::vector<double>(v.begin(), v.end());
  };

  auto a = run(frames);
  auto b = run(frames);
  CHECK(a == b);
  for (double v : a) CHECK(std::isfinite(v));

  auto reversed = frames;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(run(reversed) != a);

  // Constant sequences of different lengths stay finite and deterministic.
  std::vector<std::vector<double>> c5(5, std::vector<double>{0.3});
  std::vector<std::vector<double>> c9(9, std::vector<double>{0.3});
  for (double v : run(c5)) CHECK(std::isfinite(v));
  for (double v : run(c9)) CHECK(std::isfinite(v));
  CHECK(run(c5) == run(c5));
}

TEST_CASE("gru gradients match finite differences over all recurrent params") {
  ParamStore ps;
  auto gru = Gru::create(ps, "g", GruSpec{2, 4, 2});
  init_params(ps, 55);
  Rng rng(12);
  std::vector<std::vector<double>> frames;
  for (int i = 0; i < 3; ++i) frames.push_back(random_vec(rng, 2));
  auto w = random_vec(rng, 2);

  auto build = [&](Tape& t) {
    std::vector<Tape::Ref> refs;
    for (const auto& f : frames) refs.push_back(t.constant_vec(f));
    return t.dot(gru.encode(t, refs), t.constant_vec(w));
  };
  Tape tape(&ps);
  tape.backward(build(tape));
  std::vector<double> got(tape.param_grad());
  auto fd = oracles::fd_grad(ps, [&] {
    Tape probe(&ps);
    return probe.scalar_value(build(probe));
  });
  CHECK(oracles::max_rel_err(got, fd) < 1e-4);  // spec tolerance; observed ~1e-9
}

TEST_CASE("glorot init is deterministic with zero biases and the right spread") {
  ParamStore ps;
  ps.add("big", Shape::mat(150, 80));  // 12000 entries
  ps.add("bias", Shape::vec(64));
  init_params(ps, 1234);
  std::vector<double> first(ps.values());
  init_params(ps, 1234);
  CHECK(first == ps.values());
  init_params(ps, 1235);
  CHECK(first != ps.values());

  init_params(ps, 1234);
  for (double v : ps.slice("bias")) CHECK(v == 0.0);

  auto w = ps.slice("big");
  double sum = 0.0, sq = 0.0;
  for (double v : w) {
    sum += v;
    sq += v * v;
  }
  const double mean = sum / static_cast<double>(w.size());
  const double std = std::sqrt(sq / static_cast<double>(w.size()) - mean * mean);
  const double target = std::sqrt(2.0 / (150 + 80));  // uniform(-L,L) std with L = sqrt(6/(fi+fo))
  CHECK(std > 0.8 * target);
  CHECK(std < 1.2 * target);
}

TEST_CASE("spec validation rejects degenerate nets") {
  CHECK_THROWS_AS(MlpSpec({{3, 2}, Activation::kTanh, Activation::kNone}).validate(), ConfigError);
  CHECK_THROWS_AS(MlpSpec({{3, 0, 2}, Activation::kTanh, Activation::kNone}).validate(),
                  ConfigError);
  CHECK_THROWS_AS(GruSpec({0, 4, 2}).validate(), ConfigError);
  CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
  CHECK(parse_activation("softplus") == Activation::kSoftplus);

  ParamStore ps;
  auto mlp = Mlp::create(ps, "f", MlpSpec{{3, 4, 2}, Activation::kTanh, Activation::kNone});
  PlainEngine e(&ps);
  CHECK_THROWS_AS((void)mlp.forward(e, e.constant_vec(std::vector<double>{1.0, 2.0})),
                  inode::ShapeError);
}
