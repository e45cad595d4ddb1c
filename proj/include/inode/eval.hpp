#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inode/datagen.hpp"
#include "inode/model.hpp"

namespace inode::eval {

struct Horizon {
  std::string label;
  int len = 0;  // frames
};

struct MetricRow {
  std::string variant;
  std::uint64_t seed = 0;
  std::string horizon_label;
  int horizon_len = 0;
  double mse = 0.0;
  double mse_std = 0.0;  // sample std across sequences
};

struct MseReport {
  std::vector<MetricRow> rows;  // one per requested horizon
  int used = 0;
  int excluded = 0;  // sequences dropped after an integration failure
  // Audit trail: per used sequence, the per-frame squared error averaged over
  // dims, so every horizon's mse equals the prefix mean of its row.
  std::vector<int> seq_ids;
  std::vector<std::vector<double>> frame_sq;
};

// Rolls out mc_samples trajectories per test sequence (eps streams derived
// from (seed, sequence, sample)), takes the sample-mean prediction, and
// reports MSE over [0, horizon) x dims averaged per sequence and then across
// sequences, with the across-sequence sample std.
MseReport mse_at_horizons(const model::Model& m, const data::Dataset& test,
                          const std::vector<Horizon>& horizons, std::uint64_t seed,
                          int workers = 0);

struct SimilarityMatrix {
  int n_seq = 0;
  int n_frames = 0;
  std::vector<std::string> labels;  // "seq:frame", sequence-major
  std::vector<double> values;       // row-major [n x n], n = n_seq * n_frames
  int flagged = 0;                  // entries (p <= q) where the eps guard clamped
};

// Pairwise cosine similarity of per-frame invariant embeddings for the first
// n_seq test sequences. Content models embed single frames; modulator-only
// models embed the windows starting at each of the first n_frames frames.
// The diagonal is exactly 1 except for zero-norm embeddings, which are
// flagged and reported as 0.
SimilarityMatrix cosine_similarity_matrix(const model::Model& m, const data::Dataset& test,
                                          int n_seq, int n_frames, int workers = 0);

struct PcaResult {
  int n_points = 0;
  int dim = 0;
  int k = 0;
  std::vector<double> projected;   // [n_points x k]
  std::vector<double> explained;   // k fractions of total variance, non-increasing
  std::vector<double> mean;        // [dim]
  std::vector<double> components;  // [k x dim] row-major, orthonormal
};

// Centers the points, eigendecomposes the covariance (cyclic Jacobi), and
// projects onto the top-k directions. Degenerate directions report zero
// explained variance.
PcaResult pca_embed(std::span<const double> points, int n_points, int dim, int k = 2);

// Posterior-mean latent trajectories (eps = 0) for the first n_seq test
// sequences, flat [n_seq x n_t x latent_dim]; the pca_embed input.
std::vector<double> latent_trajectories(const model::Model& m, const data::Dataset& test,
                                        int n_seq, int workers = 0);

// CSV exporters (RFC-4180 style, 9 significant digits, header row always).
void export_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path);
void export_matrix_csv(const SimilarityMatrix& sm, const std::string& path);
void export_frame_sq_csv(const MseReport& rep, const std::string& path);
void export_pca_csv(const PcaResult& pca, int n_seq, int n_frames, const std::string& path,
                    const std::string& variance_path);

}  // namespace inode::eval
