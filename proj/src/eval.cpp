#include "inode/eval.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <utility>

#include "inode/csv.hpp"
#include "inode/errors.hpp"
#include "inode/plain.hpp"
#include "inode/rng.hpp"
#include "inode/threading.hpp"

namespace inode::eval {

MseReport mse_at_horizons(const model::Model& m, const data::Dataset& test,
                          const std::vector<Horizon>& horizons, std::uint64_t seed,
                          int workers) {
  if (test.dim != m.spec.data_dim) {
    throw ShapeError("mse_at_horizons: model data_dim " + std::to_string(m.spec.data_dim) +
                     " vs dataset dim " + std::to_string(test.dim));
  }
  if (horizons.empty()) throw ConfigError("mse_at_horizons: no horizons requested");
  for (const auto& h : horizons) {
    if (h.len < 1 || h.len > test.n_t) {
      throw ConfigError("mse_at_horizons: horizon \"" + h.label + "\" of " +
                        std::to_string(h.len) + " frames outside rollout grid of " +
                        std::to_string(test.n_t));
    }
  }
  if (test.n_seq < 1) throw ConfigError("mse_at_horizons: empty test split");

  const ode::TimeGrid grid = test.grid();
  const int mc = m.spec.mc_samples;
  std::vector<std::vector<double>> all_frame_sq(static_cast<std::size_t>(test.n_seq));
  std::vector<char> failed(static_cast<std::size_t>(test.n_seq), 0);
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(test.n_seq));
  parallel_for(test.n_seq, workers, [&](int, int s) {
    try {
      ad::PlainEngine e(&m.params);
      auto seq = test.seq(s);
      auto ctx = m.build_context(e, seq, test.n_t);
      std::vector<double> pred(static_cast<std::size_t>(test.n_t) * test.dim, 0.0);
      std::vector<double> eps(static_cast<std::size_t>(m.spec.latent_dim()));
      for (int l = 0; l < mc; ++l) {
        Rng rng = stream_rng(seed, Stream::kEval, static_cast<std::uint64_t>(s),
                             static_cast<std::uint64_t>(l));
        for (double& v : eps) v = rng.gauss();
        auto roll = m.sample_rollout(e, ctx, grid, eps);
        for (int t = 0; t < test.n_t; ++t) {
          auto dv = e.value(roll.decoded[static_cast<std::size_t>(t)]);
          for (int d = 0; d < test.dim; ++d) {
            pred[static_cast<std::size_t>(t) * test.dim + d] += dv[static_cast<std::size_t>(d)];
          }
        }
      }
      std::vector<double> fsq(static_cast<std::size_t>(test.n_t), 0.0);
      for (int t = 0; t < test.n_t; ++t) {
        double acc = 0.0;
        for (int d = 0; d < test.dim; ++d) {
          const std::size_t at = static_cast<std::size_t>(t) * test.dim + d;
          const double r = seq[at] - pred[at] / mc;
          acc += r * r;
        }
        fsq[static_cast<std::size_t>(t)] = acc / test.dim;
      }
      all_frame_sq[static_cast<std::size_t>(s)] = std::move(fsq);
    } catch (const IntegrationError&) {
      failed[static_cast<std::size_t>(s)] = 1;
    } catch (...) {
      errs[static_cast<std::size_t>(s)] = std::current_exception();
    }
  });
  for (const auto& ep : errs) {
    if (ep) std::rethrow_exception(ep);
  }

  MseReport rep;
  for (int s = 0; s < test.n_seq; ++s) {
    if (failed[static_cast<std::size_t>(s)]) {
      ++rep.excluded;
      continue;
    }
    rep.seq_ids.push_back(s);
    rep.frame_sq.push_back(std::move(all_frame_sq[static_cast<std::size_t>(s)]));
  }
  rep.used = static_cast<int>(rep.seq_ids.size());
  if (rep.used == 0) {
    throw IntegrationError("mse_at_horizons: every test sequence failed integration", 0.0);
  }

  for (const auto& h : horizons) {
    std::vector<double> per_seq(static_cast<std::size_t>(rep.used), 0.0);
    for (int i = 0; i < rep.used; ++i) {
      double acc = 0.0;
      for (int t = 0; t < h.len; ++t) acc += rep.frame_sq[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)];
      per_seq[static_cast<std::size_t>(i)] = acc / h.len;
    }
    double mean = 0.0;
    for (double v : per_seq) mean += v;
    mean /= rep.used;
    double var = 0.0;
    for (double v : per_seq) var += (v - mean) * (v - mean);
    const double std_dev = rep.used > 1 ? std::sqrt(var / (rep.used - 1)) : 0.0;
    rep.rows.push_back({model::variant_name(m.spec.variant), seed, h.label, h.len, mean, std_dev});
  }
  return rep;
}

SimilarityMatrix cosine_similarity_matrix(const model::Model& m, const data::Dataset& test,
                                          int n_seq, int n_frames, int workers) {
  const model::ModelSpec& spec = m.spec;
  if (!spec.has_content() && !spec.has_modulator()) {
    throw ConfigError("cosine_similarity_matrix: model has no invariant pathway");
  }
  if (test.dim != spec.data_dim) {
    throw ShapeError("cosine_similarity_matrix: model data_dim " + std::to_string(spec.data_dim) +
                     " vs dataset dim " + std::to_string(test.dim));
  }
  if (n_seq < 1 || n_seq > test.n_seq) {
    throw ConfigError("cosine_similarity_matrix: n_seq " + std::to_string(n_seq) +
                      " outside test split of " + std::to_string(test.n_seq));
  }
  // Content models embed single frames; modulator-only models embed the
  // window starting at each frame index, so the last one ends at
  // n_frames - 1 + n_e.
  const bool per_frame = spec.has_content();
  const int span_needed = per_frame ? n_frames : n_frames + spec.n_e - 1;
  if (n_frames < 1 || span_needed > test.n_t) {
    throw ConfigError("cosine_similarity_matrix: " + std::to_string(n_frames) +
                      " embedding positions need " + std::to_string(span_needed) +
                      " frames, test split has " + std::to_string(test.n_t));
  }

  const int q_dim = spec.q_c;
  const int n = n_seq * n_frames;
  std::vector<double> embs(static_cast<std::size_t>(n) * q_dim, 0.0);
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(n_seq));
  parallel_for(n_seq, workers, [&](int, int s) {
    try {
      ad::PlainEngine e(&m.params);
      const int frames_needed = span_needed;
      auto frames = model::make_frames(e, test.seq(s), frames_needed, test.dim);
      std::span<const ad::PlainEngine::Ref> fspan(frames);
      for (int f = 0; f < n_frames; ++f) {
        ad::PlainEngine::Ref emb =
            per_frame ? m.g_con.encode(e, fspan.subspan(static_cast<std::size_t>(f), 1))
                      : m.g_mod.encode(e, fspan.subspan(static_cast<std::size_t>(f),
                                                        static_cast<std::size_t>(spec.n_e)));
        auto v = e.value(emb);
        double* dst = embs.data() + (static_cast<std::size_t>(s) * n_frames + f) * q_dim;
        for (int d = 0; d < q_dim; ++d) dst[d] = v[static_cast<std::size_t>(d)];
      }
    } catch (...) {
      errs[static_cast<std::size_t>(s)] = std::current_exception();
    }
  });
  for (const auto& ep : errs) {
    if (ep) std::rethrow_exception(ep);
  }

  SimilarityMatrix sm;
  sm.n_seq = n_seq;
  sm.n_frames = n_frames;
  sm.labels.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n_seq; ++s) {
    for (int f = 0; f < n_frames; ++f) {
      sm.labels.push_back(std::to_string(s) + ":" + std::to_string(f));
    }
  }
  std::vector<double> norm(static_cast<std::size_t>(n), 0.0);
  for (int p = 0; p < n; ++p) {
    const double* a = embs.data() + static_cast<std::size_t>(p) * q_dim;
    double acc = 0.0;
    for (int d = 0; d < q_dim; ++d) acc += a[d] * a[d];
    norm[static_cast<std::size_t>(p)] = std::sqrt(acc);
  }
  constexpr double kEps = 1e-12;
  sm.values.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int p = 0; p < n; ++p) {
    for (int q = p; q < n; ++q) {
      const double nn = norm[static_cast<std::size_t>(p)] * norm[static_cast<std::size_t>(q)];
      double c;
      if (nn < kEps) {
        ++sm.flagged;
        const double* a = embs.data() + static_cast<std::size_t>(p) * q_dim;
        const double* b = embs.data() + static_cast<std::size_t>(q) * q_dim;
        double d = 0.0;
        for (int i = 0; i < q_dim; ++i) d += a[i] * b[i];
        c = d / kEps;
      } else if (p == q) {
        c = 1.0;  // exact by definition; avoids sqrt round-off on the diagonal
      } else {
        const double* a = embs.data() + static_cast<std::size_t>(p) * q_dim;
        const double* b = embs.data() + static_cast<std::size_t>(q) * q_dim;
        double d = 0.0;
        for (int i = 0; i < q_dim; ++i) d += a[i] * b[i];
        c = d / nn;
      }
      sm.values[static_cast<std::size_t>(p) * n + q] = c;
      sm.values[static_cast<std::size_t>(q) * n + p] = c;
    }
  }
  return sm;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix held row-major in a.
// On return the diagonal of a carries the eigenvalues and the columns of v
// the eigenvectors.
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& v) {
  v.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  double fro = 0.0;
  for (double x : a) fro += x * x;
  const double stop = fro * 1e-30 + 1e-300;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double x = a[static_cast<std::size_t>(p) * n + q];
        off += x * x;
      }
    }
    if (off <= stop) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[static_cast<std::size_t>(p) * n + q];
        if (apq == 0.0) continue;
        const double app = a[static_cast<std::size_t>(p) * n + p];
        const double aqq = a[static_cast<std::size_t>(q) * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        a[static_cast<std::size_t>(p) * n + p] = app - t * apq;
        a[static_cast<std::size_t>(q) * n + q] = aqq + t * apq;
        a[static_cast<std::size_t>(p) * n + q] = 0.0;
        a[static_cast<std::size_t>(q) * n + p] = 0.0;
        for (int k = 0; k < n; ++k) {
          if (k != p && k != q) {
            const double akp = a[static_cast<std::size_t>(k) * n + p];
            const double akq = a[static_cast<std::size_t>(k) * n + q];
            a[static_cast<std::size_t>(k) * n + p] = c * akp - s * akq;
            a[static_cast<std::size_t>(p) * n + k] = c * akp - s * akq;
            a[static_cast<std::size_t>(k) * n + q] = s * akp + c * akq;
            a[static_cast<std::size_t>(q) * n + k] = s * akp + c * akq;
          }
          const double vkp = v[static_cast<std::size_t>(k) * n + p];
          const double vkq = v[static_cast<std::size_t>(k) * n + q];
          v[static_cast<std::size_t>(k) * n + p] = c * vkp - s * vkq;
          v[static_cast<std::size_t>(k) * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
}

}  // namespace

PcaResult pca_embed(std::span<const double> points, int n_points, int dim, int k) {
  if (dim < 1 || n_points <= dim) {
    throw ConfigError("pca_embed: need more points than dimensions, got " +
                      std::to_string(n_points) + " x " + std::to_string(dim));
  }
  if (k < 1 || k > dim) {
    throw ConfigError("pca_embed: k = " + std::to_string(k) + " outside [1, " +
                      std::to_string(dim) + "]");
  }
  if (points.size() != static_cast<std::size_t>(n_points) * dim) {
    throw ShapeError("pca_embed: " + std::to_string(points.size()) + " values for " +
                     std::to_string(n_points) + " x " + std::to_string(dim));
  }

  PcaResult res;
  res.n_points = n_points;
  res.dim = dim;
  res.k = k;
  res.mean.assign(static_cast<std::size_t>(dim), 0.0);
  for (int i = 0; i < n_points; ++i) {
    for (int d = 0; d < dim; ++d) {
      res.mean[static_cast<std::size_t>(d)] += points[static_cast<std::size_t>(i) * dim + d];
    }
  }
  for (double& v : res.mean) v /= n_points;

  std::vector<double> cov(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int i = 0; i < n_points; ++i) {
    for (int d = 0; d < dim; ++d) {
      const double xd = points[static_cast<std::size_t>(i) * dim + d] - res.mean[static_cast<std::size_t>(d)];
      for (int e2 = d; e2 < dim; ++e2) {
        const double xe = points[static_cast<std::size_t>(i) * dim + e2] -
                          res.mean[static_cast<std::size_t>(e2)];
        cov[static_cast<std::size_t>(d) * dim + e2] += xd * xe;
      }
    }
  }
  for (int d = 0; d < dim; ++d) {
    for (int e2 = d; e2 < dim; ++e2) {
      cov[static_cast<std::size_t>(d) * dim + e2] /= n_points;
      cov[static_cast<std::size_t>(e2) * dim + d] = cov[static_cast<std::size_t>(d) * dim + e2];
    }
  }

  std::vector<double> vecs;
  jacobi_eigen(cov, dim, vecs);
  std::vector<std::pair<double, int>> order(static_cast<std::size_t>(dim));
  double total = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double lam = std::max(0.0, cov[static_cast<std::size_t>(d) * dim + d]);
    order[static_cast<std::size_t>(d)] = {lam, d};
    total += lam;
  }
  std::sort(order.begin(), order.end(),
            [](const auto& x, const auto& y) { return x.first > y.first; });

  res.components.assign(static_cast<std::size_t>(k) * dim, 0.0);
  res.explained.assign(static_cast<std::size_t>(k), 0.0);
  for (int j = 0; j < k; ++j) {
    const int col = order[static_cast<std::size_t>(j)].second;
    for (int d = 0; d < dim; ++d) {
      res.components[static_cast<std::size_t>(j) * dim + d] =
          vecs[static_cast<std::size_t>(d) * dim + col];
    }
    res.explained[static_cast<std::size_t>(j)] =
        total > 0.0 ? order[static_cast<std::size_t>(j)].first / total : 0.0;
  }

  res.projected.assign(static_cast<std::size_t>(n_points) * k, 0.0);
  for (int i = 0; i < n_points; ++i) {
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int d = 0; d < dim; ++d) {
        acc += (points[static_cast<std::size_t>(i) * dim + d] - res.mean[static_cast<std::size_t>(d)]) *
               res.components[static_cast<std::size_t>(j) * dim + d];
      }
      res.projected[static_cast<std::size_t>(i) * k + j] = acc;
    }
  }
  return res;
}

std::vector<double> latent_trajectories(const model::Model& m, const data::Dataset& test,
                                        int n_seq, int workers) {
  if (test.dim != m.spec.data_dim) {
    throw ShapeError("latent_trajectories: model data_dim " + std::to_string(m.spec.data_dim) +
                     " vs dataset dim " + std::to_string(test.dim));
  }
  if (n_seq < 1 || n_seq > test.n_seq) {
    throw ConfigError("latent_trajectories: n_seq " + std::to_string(n_seq) +
                      " outside test split of " + std::to_string(test.n_seq));
  }
  const int q = m.spec.latent_dim();
  const ode::TimeGrid grid = test.grid();
  std::vector<double> out(static_cast<std::size_t>(n_seq) * test.n_t * q, 0.0);
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(n_seq));
  parallel_for(n_seq, workers, [&](int, int s) {
    try {
      ad::PlainEngine e(&m.params);
      auto ctx = m.build_context(e, test.seq(s), test.n_t);
      const std::vector<double> eps(static_cast<std::size_t>(q), 0.0);
      auto roll = m.sample_rollout(e, ctx, grid, eps);
      for (int t = 0; t < test.n_t; ++t) {
        auto xv = e.value(roll.latents[static_cast<std::size_t>(t)]);
        double* dst = out.data() + (static_cast<std::size_t>(s) * test.n_t + t) * q;
        for (int d = 0; d < q; ++d) dst[d] = xv[static_cast<std::size_t>(d)];
      }
    } catch (...) {
      errs[static_cast<std::size_t>(s)] = std::current_exception();
    }
  });
  for (const auto& ep : errs) {
    if (ep) std::rethrow_exception(ep);
  }
  return out;
}

void export_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path) {
  CsvWriter w(path);
  w.row({"variant", "seed", "horizon_label", "horizon_len", "mse", "mse_std"});
  for (const auto& r : rows) {
    w.row({r.variant, std::to_string(r.seed), r.horizon_label, std::to_string(r.horizon_len),
           fmt_g9(r.mse), fmt_g9(r.mse_std)});
  }
  w.close();
}

void export_matrix_csv(const SimilarityMatrix& sm, const std::string& path) {
  CsvWriter w(path);
  const int n = static_cast<int>(sm.labels.size());
  std::vector<std::string> head;
  head.reserve(static_cast<std::size_t>(n) + 1);
  head.push_back("label");
  for (const auto& l : sm.labels) head.push_back(l);
  w.row(head);
  for (int p = 0; p < n; ++p) {
    std::vector<std::string> row;
    row.reserve(static_cast<std::size_t>(n) + 1);
    row.push_back(sm.labels[static_cast<std::size_t>(p)]);
    for (int q = 0; q < n; ++q) {
      row.push_back(fmt_g9(sm.values[static_cast<std::size_t>(p) * n + q]));
    }
    w.row(row);
  }
  w.close();
}

void export_frame_sq_csv(const MseReport& rep, const std::string& path) {
  CsvWriter w(path);
  w.row({"seq", "frame", "sq_err"});
  for (int i = 0; i < rep.used; ++i) {
    const auto& fs = rep.frame_sq[static_cast<std::size_t>(i)];
    for (std::size_t t = 0; t < fs.size(); ++t) {
      w.row({std::to_string(rep.seq_ids[static_cast<std::size_t>(i)]), std::to_string(t),
             fmt_g9(fs[t])});
    }
  }
  w.close();
}

void export_pca_csv(const PcaResult& pca, int n_seq, int n_frames, const std::string& path,
                    const std::string& variance_path) {
  if (n_seq * n_frames != pca.n_points) {
    throw ShapeError("export_pca_csv: " + std::to_string(n_seq) + " x " +
                     std::to_string(n_frames) + " does not cover " +
                     std::to_string(pca.n_points) + " points");
  }
  CsvWriter w(path);
  std::vector<std::string> head{"seq", "frame"};
  for (int j = 0; j < pca.k; ++j) head.push_back("pc" + std::to_string(j + 1));
  w.row(head);
  for (int s = 0; s < n_seq; ++s) {
    for (int t = 0; t < n_frames; ++t) {
      std::vector<std::string> row{std::to_string(s), std::to_string(t)};
      const std::size_t at = (static_cast<std::size_t>(s) * n_frames + t) * pca.k;
      for (int j = 0; j < pca.k; ++j) row.push_back(fmt_g9(pca.projected[at + j]));
      w.row(row);
    }
  }
  w.close();
  CsvWriter wv(variance_path);
  wv.row({"component", "explained_fraction"});
  for (int j = 0; j < pca.k; ++j) {
    wv.row({"pc" + std::to_string(j + 1), fmt_g9(pca.explained[static_cast<std::size_t>(j)])});
  }
  wv.close();
}

}  // namespace inode::eval
