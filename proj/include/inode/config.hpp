#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "inode/datagen.hpp"
#include "inode/eval.hpp"
#include "inode/model.hpp"
#include "inode/train.hpp"

namespace inode::cfg {

// Where a benchmark lives on disk and how to regenerate it. `path` is a
// directory holding train.ds / val.ds / test.ds plus manifest.json (the
// resolved config snapshot written by the generate command).
struct DatasetSection {
  std::string name;  // sinusoid | lotka_volterra | sinusoid_content
  std::string path;
  data::GenConfig gen;
};

struct EvalSection {
  // Entries are either symbolic ("tin", "nt", "3nt") or decimal frame counts;
  // resolve_horizons() expands them against the model and sequence length.
  std::vector<std::string> horizons{"tin", "nt", "3nt"};
  int mc_samples = 20;   // L, Monte-Carlo samples per predicted trajectory
  int sim_n_seq = 25;    // similarity-matrix block: sequences
  int sim_n_frames = 16; // similarity-matrix block: embedding positions
};

// Fully resolved experiment. Unset fields fall back to the per-dataset
// protocol (sinusoid: t_in 3 / t_inv 10 / q 4, batch 16, 300 epochs;
// lotka_volterra: t_in 8 / t_inv 40 / q 8, batch 32, 200 epochs;
// sinusoid_content mirrors sinusoid at data dimension 2).
struct ExperimentConfig {
  std::string output_dir;
  DatasetSection dataset;
  model::ModelSpec model;
  train::TrainConfig train;
  EvalSection eval;

  // Resolved snapshot; parse_experiment(to_json()) reproduces this config.
  nlohmann::json to_json() const;
};

// Strict parse: unknown keys, wrong types, and missing required fields all
// raise ConfigError naming the offending field path ("config.train.lr: ...").
// `dataset.name` and `dataset.seed` are the only required leaves.
ExperimentConfig parse_experiment(const nlohmann::json& j);

// Reads and parses a config file. Missing file -> MissingArtifact; invalid
// JSON -> FormatError; schema violations -> ConfigError as above.
ExperimentConfig load_experiment(const std::string& path);

// Horizon expansion: "tin" -> spec.t_in, "nt" -> n_t, "3nt" -> 3*n_t, decimal
// strings give explicit frame counts. Labels keep the symbolic entry text.
std::vector<eval::Horizon> resolve_horizons(const std::vector<std::string>& entries,
                                            const model::ModelSpec& spec, int n_t);

// JSON file helpers shared by the CLI (pretty-printed, trailing newline).
void save_json(const nlohmann::json& j, const std::string& path);
nlohmann::json load_json(const std::string& path);

}  // namespace inode::cfg
