#include "inode/objective.hpp"

#include <cmath>
#include <exception>
#include <set>
#include <string>
#include <vector>

#include "inode/tape.hpp"
#include "inode/threading.hpp"

namespace inode::obj {

double cosine(std::span<const double> a, std::span<const double> b, double eps) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine: length " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double nn = std::sqrt(na) * std::sqrt(nb);
  return d / (nn >= eps ? nn : eps);
}

double ssl_loss(const std::vector<std::vector<std::vector<double>>>& groups) {
  double sum = 0.0;
  long pairs = 0;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i + 1 < g.size(); ++i) {
      for (std::size_t j = i + 1; j < g.size(); ++j) {
        sum += cosine(g[i], g[j]);
        ++pairs;
      }
    }
  }
  return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

std::vector<std::pair<int, int>> sample_pairs(int n, int max_pairs, Rng& rng) {
  std::vector<std::pair<int, int>> out;
  if (n < 2) return out;
  const long total = static_cast<long>(n) * (n - 1) / 2;
  if (max_pairs <= 0 || total <= max_pairs) {
    out.reserve(static_cast<std::size_t>(total));
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) out.emplace_back(i, j);
    }
    return out;
  }
  // Rejection into an ordered set keeps the draw uniform over distinct pairs
  // and the output ordering independent of the draw order.
  std::set<long> chosen;
  while (static_cast<int>(chosen.size()) < max_pairs) {
    chosen.insert(static_cast<long>(rng.below(static_cast<std::uint64_t>(total))));
  }
  out.reserve(static_cast<std::size_t>(max_pairs));
  for (long k : chosen) {
    // Lexicographic rank -> (i, j): row i holds n-1-i pairs.
    int i = 0;
    long row = n - 1;
    while (k >= row) {
      k -= row;
      ++i;
      row = n - 1 - i;
    }
    out.emplace_back(i, i + 1 + static_cast<int>(k));
  }
  return out;
}

namespace {

struct SeqOut {
  double root = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double pair_sum[2] = {0.0, 0.0};
  std::vector<double> grad;
};

}  // namespace

BatchResult total_objective(const model::Model& m, const data::Dataset& ds,
                            std::span<const int> seq_indices, const ObjectiveOptions& opt) {
  const model::ModelSpec& spec = m.spec;
  if (ds.dim != spec.data_dim) {
    throw ShapeError("model expects data_dim " + std::to_string(spec.data_dim) +
                     ", dataset \"" + ds.name + "\" has dim " + std::to_string(ds.dim));
  }
  if (seq_indices.empty()) throw ConfigError("total_objective: empty batch");
  for (int s : seq_indices) {
    if (s < 0 || s >= ds.n_seq) {
      throw ConfigError("total_objective: sequence index " + std::to_string(s) +
                        " outside split of " + std::to_string(ds.n_seq));
    }
  }
  if (!(opt.lambda >= 0.0)) throw ConfigError("total_objective: lambda must be >= 0");
  if (!(opt.kl_scale >= 0.0)) throw ConfigError("total_objective: kl_scale must be >= 0");

  const int n_batch = static_cast<int>(seq_indices.size());
  const ode::TimeGrid grid = ds.grid();

  // Pathway 0 = content (per-frame embeddings over the first t_inv frames),
  // pathway 1 = modulator (per-window embeddings). Embedding counts are fixed
  // by the spec, so pair budgets and the batch-wide normalizer are known
  // before any sequence is processed.
  const bool use_ssl = opt.lambda > 0.0;
  const int emb_count[2] = {spec.has_content() ? spec.t_inv : 0,
                            spec.has_modulator() ? spec.n_windows() : 0};
  long per_seq[2] = {0, 0};
  int active = 0;
  for (int p = 0; p < 2; ++p) {
    if (!use_ssl || emb_count[p] < 2) continue;
    const long full = static_cast<long>(emb_count[p]) * (emb_count[p] - 1) / 2;
    per_seq[p] = (opt.max_pairs > 0 && full > opt.max_pairs) ? opt.max_pairs : full;
    if (per_seq[p] > 0) ++active;
  }
  const long total_pairs[2] = {per_seq[0] * n_batch, per_seq[1] * n_batch};
  // Both pathways active: ssl is the unweighted mean of the two pathway means.
  double coeff[2] = {0.0, 0.0};
  for (int p = 0; p < 2; ++p) {
    if (per_seq[p] > 0) {
      coeff[p] = opt.lambda / (static_cast<double>(active) * static_cast<double>(total_pairs[p]));
    }
  }

  std::vector<SeqOut> outs(static_cast<std::size_t>(n_batch));
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(n_batch));
  parallel_for(n_batch, opt.workers, [&](int, int bi) {
    try {
      const int sidx = seq_indices[static_cast<std::size_t>(bi)];
      SeqOut& out = outs[static_cast<std::size_t>(bi)];
      ad::Tape t(&m.params);
      auto seq = ds.seq(sidx);
      auto ctx = m.build_context(t, seq, ds.n_t);

      Rng eps_rng = stream_rng(opt.seed, Stream::kEps, static_cast<std::uint64_t>(opt.step),
                               static_cast<std::uint64_t>(sidx));
      std::vector<double> eps(static_cast<std::size_t>(spec.latent_dim()));
      for (double& v : eps) v = eps_rng.gauss();

      auto roll = m.sample_rollout(t, ctx, grid, eps);
      auto rec = recon_loglik(t, roll.decoded, seq, ds.dim, sigma_node(t, m));
      auto kl = kl_diag_gaussian(t, ctx.q);
      auto acc = t.sub(rec, t.scale(kl, opt.kl_scale));

      if (active > 0) {
        Rng pair_rng = stream_rng(opt.seed, Stream::kPairs, static_cast<std::uint64_t>(opt.step),
                                  static_cast<std::uint64_t>(sidx));
        for (int p = 0; p < 2; ++p) {
          if (per_seq[p] == 0) continue;
          const auto& embs = p == 0 ? ctx.content_embs : ctx.window_embs;
          auto pairs = sample_pairs(emb_count[p], opt.max_pairs, pair_rng);
          ad::NodeId psum = -1;
          for (auto [i, j] : pairs) {
            auto c = cosine_node(t, embs[static_cast<std::size_t>(i)],
                                 embs[static_cast<std::size_t>(j)]);
            psum = psum < 0 ? c : t.add(psum, c);
          }
          out.pair_sum[p] = t.scalar_value(psum);
          acc = t.add(acc, t.scale(psum, coeff[p]));
        }
      }

      auto root = t.scale(acc, -1.0);
      out.root = t.scalar_value(root);
      if (!std::isfinite(out.root)) {
        throw TrainingError("non-finite loss at sequence " + std::to_string(sidx));
      }
      t.backward(root);
      out.recon = t.scalar_value(rec);
      out.kl = t.scalar_value(kl);
      out.grad = t.param_grad();
    } catch (...) {
      errs[static_cast<std::size_t>(bi)] = std::current_exception();
    }
  });
  for (const auto& ep : errs) {
    if (ep) std::rethrow_exception(ep);
  }

  BatchResult res;
  res.grad.assign(m.params.size(), 0.0);
  double pair_sum[2] = {0.0, 0.0};
  for (const SeqOut& out : outs) {
    res.objective += out.root;
    res.loss.recon += out.recon;
    res.loss.kl += out.kl;
    pair_sum[0] += out.pair_sum[0];
    pair_sum[1] += out.pair_sum[1];
    for (std::size_t j = 0; j < res.grad.size(); ++j) res.grad[j] += out.grad[j];
  }
  for (int p = 0; p < 2; ++p) {
    if (per_seq[p] > 0) {
      res.loss.ssl += pair_sum[p] / (static_cast<double>(active) * static_cast<double>(total_pairs[p]));
      res.ssl_pairs += total_pairs[p];
    }
  }
  res.loss.lambda = opt.lambda;
  res.loss.ssl_skipped = use_ssl && active == 0;
  res.loss.elbo = res.loss.recon - res.loss.kl;
  res.loss.total = res.loss.elbo + opt.lambda * res.loss.ssl;
  return res;
}

}  // namespace inode::obj
