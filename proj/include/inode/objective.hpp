#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inode/datagen.hpp"
#include "inode/errors.hpp"
#include "inode/model.hpp"
#include "inode/rng.hpp"

namespace inode::obj {

// Per-step loss report. recon and kl are summed over time and batch; ssl is
// the mean within-sequence pair cosine. Invariants: elbo = recon - kl,
// total = elbo + lambda * ssl.
struct LossBreakdown {
  double elbo = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double ssl = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  bool ssl_skipped = false;  // lambda > 0 but no pathway yielded a pair
};

struct ObjectiveOptions {
  double lambda = 0.0;
  // Warm-up factor multiplying the KL inside the minimized scalar only;
  // LossBreakdown always reports the unscaled ELBO.
  double kl_scale = 1.0;
  std::uint64_t seed = 0;
  long step = 0;
  int max_pairs = 256;  // per sequence per pathway; <= 0 disables the cap
  int workers = 0;      // parallel fan-out cap; <= 0 means thread_cap()
};

struct BatchResult {
  LossBreakdown loss;
  // Minimized scalar -(sum_n [recon_n - kl_scale*kl_n] + lambda*ssl) and its
  // gradient over the flat parameter vector, summed over the batch in
  // slot order (deterministic under any worker count).
  double objective = 0.0;
  std::vector<double> grad;
  long ssl_pairs = 0;  // pairs entering the ssl mean this step
};

// sigma_obs as a graph node: softplus of the raw scalar parameter.
template <typename E>
typename E::Ref sigma_node(E& e, const model::Model& m) {
  return e.softplus(e.param(m.sigma_obs_raw));
}

// KL(N(mu, diag sigma^2) || N(0, I)) = 1/2 sum_d (sigma_d^2 + mu_d^2 - 1
// - log sigma_d^2), with log sigma^2 taken directly from the posterior node.
template <typename E>
typename E::Ref kl_diag_gaussian(E& e, const model::Posterior<E>& q) {
  auto excess =
      e.sub(e.add(e.exp(q.log_var), e.square(q.mu)), e.add_const(q.log_var, 1.0));
  return e.scale(e.sum(excess), 0.5);
}

// Sum over frames and dims of log N(y | decoded, sigma^2); one trajectory
// sample, so this is the single-draw Monte-Carlo estimate of the expected
// reconstruction term. sigma is a scalar node (gradients flow into it).
template <typename E>
typename E::Ref recon_loglik(E& e, const std::vector<typename E::Ref>& decoded,
                             std::span<const double> y, int dim, typename E::Ref sigma) {
  if (decoded.empty() || static_cast<std::size_t>(dim) * decoded.size() != y.size()) {
    throw ShapeError("recon_loglik: " + std::to_string(decoded.size()) + " frames of dim " +
                     std::to_string(dim) + " against " + std::to_string(y.size()) +
                     " target values");
  }
  typename E::Ref sq = -1;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    auto target = e.constant_vec(y.subspan(i * static_cast<std::size_t>(dim),
                                           static_cast<std::size_t>(dim)));
    auto res = e.sum(e.square(e.sub(decoded[i], target)));
    sq = sq < 0 ? res : e.add(sq, res);
  }
  const double n = static_cast<double>(y.size());
  auto quad = e.div(sq, e.scale(e.square(sigma), 2.0));
  auto neg = e.add(quad, e.scale(e.log(sigma), n));
  return e.add_const(e.scale(neg, -1.0), -0.5 * n * std::log(2.0 * std::numbers::pi));
}

// cosine(a, b) = dot / max(|a||b|, eps). The graph is define-by-run, so the
// guard branch inspects the freshly computed norm product: the clamp is exact
// (no arithmetic rewrite of max) and a clamped pair routes gradient through
// the numerator only, which is the correct subgradient.
template <typename E>
typename E::Ref cosine_node(E& e, typename E::Ref a, typename E::Ref b, double eps = 1e-12) {
  auto d = e.dot(a, b);
  auto nn = e.mul(e.sqrt(e.dot(a, a)), e.sqrt(e.dot(b, b)));
  auto denom = e.scalar_value(nn) >= eps ? nn : e.scalar(eps);
  return e.div(d, denom);
}

// Plain-number cosine with the same accumulation order and eps guard as
// cosine_node, so the two agree bitwise.
double cosine(std::span<const double> a, std::span<const double> b, double eps = 1e-12);

// Mean cosine over all within-sequence unordered pairs (i < j), exhaustive.
// Groups with fewer than two embeddings are skipped; if everything is
// skipped the loss is 0. There is no cross-sequence term of any sign.
double ssl_loss(const std::vector<std::vector<std::vector<double>>>& groups);

// Distinct unordered index pairs i < j among n items, ascending lexicographic:
// all of them when the count fits max_pairs, else a uniform subsample of
// exactly max_pairs (max_pairs <= 0 disables the cap).
std::vector<std::pair<int, int>> sample_pairs(int n, int max_pairs, Rng& rng);

// Full training objective for one mini-batch: per-sequence graphs (one
// reparameterized trajectory draw each), reverse sweeps, and a slot-ordered
// gradient reduction. Epsilon and pair draws derive from (seed, step,
// sequence index), so results depend only on options and inputs, never on
// batch composition order or thread scheduling. lambda = 0 skips the ssl
// construction entirely.
BatchResult total_objective(const model::Model& m, const data::Dataset& ds,
                            std::span<const int> seq_indices, const ObjectiveOptions& opt);

}  // namespace inode::obj
