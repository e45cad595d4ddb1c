#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inode/datagen.hpp"
#include "inode/model.hpp"

namespace inode::train {

struct TrainConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 16;
  int max_epochs = 300;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  int kl_warmup_epochs = 0;  // 0 disables; else kl_scale ramps linearly to 1
  int patience = 30;         // epochs without val improvement; <= 0 disables
  int max_pairs = 256;
  int val_mc_samples = 5;
  int workers = 0;
  long max_steps = 0;  // 0 = no step cap (epochs govern); else stop after this many

  void validate() const;
};

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
};

// Bias-corrected Adam. Validates every gradient entry before touching params,
// so a TrainingError leaves params and moments exactly as they were.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const TrainConfig& cfg);

// Mean over sequences of per-sequence MSE between observations and the
// mc_samples-mean prediction over the full split horizon. Epsilon draws come
// from (seed, sequence, sample), so the metric is a pure function of params.
// Sequences whose rollout fails integration are excluded; if every sequence
// fails the result is +infinity.
double validation_mse(const model::Model& m, const data::Dataset& ds, int mc_samples,
                      std::uint64_t seed, int workers = 0);

struct TrainResult {
  model::Checkpoint best;  // lowest validation MSE seen
  model::Checkpoint last;  // final state, or the last good state after an abort
  double best_val_mse = 0.0;
  long steps = 0;   // optimizer steps performed by this call
  int epochs = 0;   // epochs completed by this call
  bool aborted = false;  // non-finite loss/gradient stopped training early
};

// Mini-batch Adam on -total_objective. Deterministic given (config, data):
// batch order comes from (seed, epoch), per-step draws from (seed, step).
// Each epoch ends with a validation pass; the best checkpoint tracks the
// lowest validation MSE. The training log at log_path gets one CSV row per
// step (step, epoch, elbo, recon, kl, ssl, total, val_mse), the val_mse cell
// filled on each epoch's closing row. Passing a resume checkpoint restores
// params, Adam moments, and the step counter; training continues exactly as
// if it had never stopped.
TrainResult train(model::Model& m, const data::Dataset& train_ds, const data::Dataset& val_ds,
                  const TrainConfig& cfg, const std::string& log_path,
                  const model::Checkpoint* resume = nullptr);

}  // namespace inode::train
