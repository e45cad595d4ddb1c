#pragma once

#include <string>

#include "inode/config.hpp"

namespace inode::cli {

// Command bodies. Each takes a fully resolved config, does its work, and
// throws on failure (ConfigError / MissingArtifact / anything else); run()
// maps those to exit codes 3 / 2 / 1. Successful commands return 0.
int cmd_generate(const cfg::ExperimentConfig& c);

// Trains from scratch, or continues from `resume_path` when nonempty. Writes
// checkpoint_best.ck, checkpoint_last.ck, train_log.csv, and
// resolved_config.json into the output directory. Returns 1 (without
// throwing) when training aborted on a non-finite loss; the last good
// checkpoint is still written.
int cmd_train(const cfg::ExperimentConfig& c, const std::string& resume_path = "");

// Evaluates a checkpoint (default: <output_dir>/checkpoint_best.ck) on the
// test split. Always writes metrics.csv + frame_sq.csv; with `full` also the
// similarity matrix and PCA exports when the model has invariant pathways.
int cmd_eval(const cfg::ExperimentConfig& c, const std::string& checkpoint_path = "",
             bool full = true);

// Sweeps one axis over the protocol grid with four seeds per setting and
// aggregates test MSE at horizon N_t. `parallel` > 1 fans runs out across
// forked processes; runs share nothing.
int cmd_ablate(const cfg::ExperimentConfig& c, const std::string& axis, int parallel = 1);

// Entry point: parses argv, loads the config, applies --seed/--out overrides,
// dispatches, and converts exceptions to exit codes (0 ok, 1 runtime,
// 2 missing artifact, 3 config error).
int run(int argc, const char* const* argv);

}  // namespace inode::cli
