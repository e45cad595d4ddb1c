#include "inode/cli.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "inode/csv.hpp"
#include "inode/datagen.hpp"
#include "inode/errors.hpp"
#include "inode/eval.hpp"
#include "inode/model.hpp"
#include "inode/train.hpp"

namespace fs = std::filesystem;

namespace inode::cli {
namespace {

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw FormatError("cannot create directory " + path + ": " + ec.message());
}

// Shared exception-to-exit-code mapping (also used inside forked runs).
int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

// Runs jobs with at most `parallel` forked children at a time. Children share
// nothing with the parent but the open stderr/stdout. Returns the worst exit
// code seen.
int run_jobs(const std::vector<std::function<int()>>& jobs, int parallel) {
  if (parallel <= 1) {
    int worst = 0;
    for (const auto& job : jobs) worst = std::max(worst, guarded(job));
    return worst;
  }
  int worst = 0;
  std::map<pid_t, std::size_t> live;
  std::size_t next = 0;
  auto reap_one = [&] {
    int status = 0;
    const pid_t done = waitpid(-1, &status, 0);
    if (done <= 0) return;
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 1;
    worst = std::max(worst, code);
    live.erase(done);
  };
  while (next < jobs.size() || !live.empty()) {
    while (next < jobs.size() && static_cast<int>(live.size()) < parallel) {
      std::cout.flush();
      std::cerr.flush();
      const pid_t pid = fork();
      if (pid == 0) {
        _exit(guarded(jobs[next]));
      }
      if (pid < 0) {
        worst = std::max(worst, guarded(jobs[next]));  // fork failed: run inline
      } else {
        live.emplace(pid, next);
      }
      ++next;
    }
    if (!live.empty()) reap_one();
  }
  return worst;
}

double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

std::string fmt_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// One swept setting: directory-safe value text plus the config mutation.
struct AxisValue {
  std::string text;
  std::function<void(cfg::ExperimentConfig&)> apply;
};

std::vector<AxisValue> grid_for(const std::string& axis) {
  std::vector<AxisValue> out;
  if (axis == "n_train") {
    for (int v : {100, 250, 500}) {
      out.push_back({std::to_string(v), [v](cfg::ExperimentConfig& c) {
                       c.dataset.gen.n_train = v;
                     }});
    }
  } else if (axis == "t_inv") {
    for (int v : {10, 20, 40, 80}) {
      out.push_back({std::to_string(v), [v](cfg::ExperimentConfig& c) {
                       c.model.t_inv = v;
                       if (c.model.variant == model::Variant::kNode) c.model.t_in_node = v;
                     }});
    }
  } else if (axis == "solver") {
    for (const char* v : {"euler", "rk4", "dopri5"}) {
      out.push_back({v, [v](cfg::ExperimentConfig& c) {
                       c.model.solver.kind = ode::parse_solver_kind(v);
                     }});
    }
  } else if (axis == "dims") {
    for (auto [qx, qc] : {std::pair{2, 2}, {2, 8}, {8, 2}, {4, 4}, {8, 8}, {16, 16}}) {
      out.push_back({std::to_string(qx) + "x" + std::to_string(qc),
                     [qx = qx, qc = qc](cfg::ExperimentConfig& c) {
                       c.model.q_x = qx;
                       c.model.q_c = qc;
                     }});
    }
  } else if (axis == "lambda") {
    for (double v : {0.0, 1.0, 10.0, 100.0, 1000.0}) {
      out.push_back({fmt_value(v), [v](cfg::ExperimentConfig& c) { c.train.lambda = v; }});
    }
  } else {
    throw ConfigError("ablate: unknown axis '" + axis +
                      "' (expected n_train, t_inv, solver, dims, or lambda)");
  }
  return out;
}

}  // namespace

int cmd_generate(const cfg::ExperimentConfig& c) {
  ensure_dir(c.dataset.path);
  data::SplitBundle b = data::generate(c.dataset.name, c.dataset.gen);
  data::save_dataset(b.train, c.dataset.path + "/train.ds");
  data::save_dataset(b.val, c.dataset.path + "/val.ds");
  data::save_dataset(b.test, c.dataset.path + "/test.ds");
  cfg::save_json(c.to_json(), c.dataset.path + "/manifest.json");
  std::cout << "generate: wrote " << b.train.n_seq << "/" << b.val.n_seq << "/" << b.test.n_seq
            << " sequences to " << c.dataset.path << "\n";
  return 0;
}

int cmd_train(const cfg::ExperimentConfig& c, const std::string& resume_path) {
  data::Dataset train_ds = data::load_dataset(c.dataset.path + "/train.ds");
  data::Dataset val_ds = data::load_dataset(c.dataset.path + "/val.ds");
  if (train_ds.dim != c.model.data_dim) {
    throw ConfigError("dataset " + c.dataset.path + " has dimension " +
                      std::to_string(train_ds.dim) + " but the model expects " +
                      std::to_string(c.model.data_dim));
  }
  ensure_dir(c.output_dir);

  model::Model m = model::Model::create(c.model);
  model::Checkpoint resume;
  const model::Checkpoint* resume_ptr = nullptr;
  if (!resume_path.empty()) {
    resume = model::load_checkpoint(resume_path);
    m = model::model_from_checkpoint(resume);
    resume_ptr = &resume;
  } else {
    m.init(c.train.seed);
  }

  train::TrainResult r =
      train::train(m, train_ds, val_ds, c.train, c.output_dir + "/train_log.csv", resume_ptr);
  model::save_checkpoint(r.best, c.output_dir + "/checkpoint_best.ck");
  model::save_checkpoint(r.last, c.output_dir + "/checkpoint_last.ck");
  cfg::save_json(c.to_json(), c.output_dir + "/resolved_config.json");
  std::cout << "train: " << r.steps << " steps over " << r.epochs << " epochs, best val mse "
            << fmt_g9(r.best_val_mse) << ", artifacts in " << c.output_dir << "\n";
  if (r.aborted) {
    std::cerr << "train: aborted on a non-finite loss; last good checkpoint written\n";
    return 1;
  }
  return 0;
}

int cmd_eval(const cfg::ExperimentConfig& c, const std::string& checkpoint_path, bool full) {
  const std::string ckp =
      checkpoint_path.empty() ? c.output_dir + "/checkpoint_best.ck" : checkpoint_path;
  model::Checkpoint ck = model::load_checkpoint(ckp);
  model::Model m = model::model_from_checkpoint(ck);
  m.spec.mc_samples = c.eval.mc_samples;

  // Horizons expand against the generating sequence length recorded in the
  // dataset manifest (the test split itself is 3x longer).
  const auto manifest = cfg::parse_experiment(cfg::load_json(c.dataset.path + "/manifest.json"));
  data::Dataset test_ds = data::load_dataset(c.dataset.path + "/test.ds");
  const auto horizons = cfg::resolve_horizons(c.eval.horizons, m.spec, manifest.dataset.gen.n_t);

  ensure_dir(c.output_dir);
  eval::MseReport rep = eval::mse_at_horizons(m, test_ds, horizons, c.train.seed);
  eval::export_metrics_csv(rep.rows, c.output_dir + "/metrics.csv");
  eval::export_frame_sq_csv(rep, c.output_dir + "/frame_sq.csv");
  if (rep.excluded > 0) {
    std::cerr << "eval: " << rep.excluded << " sequence(s) excluded (integration failure)\n";
  }

  if (full && (m.spec.has_content() || m.spec.has_modulator())) {
    const int n_seq = std::min(c.eval.sim_n_seq, test_ds.n_seq);
    const int max_frames =
        m.spec.has_content() ? test_ds.n_t : test_ds.n_t - m.spec.n_e + 1;
    const int n_frames = std::min(c.eval.sim_n_frames, max_frames);
    if (n_seq < c.eval.sim_n_seq || n_frames < c.eval.sim_n_frames) {
      std::cerr << "eval: similarity block clamped to " << n_seq << "x" << n_frames
                << " to fit the test split\n";
    }
    if (n_frames >= 1) {
      eval::SimilarityMatrix sm = eval::cosine_similarity_matrix(m, test_ds, n_seq, n_frames);
      eval::export_matrix_csv(sm, c.output_dir + "/similarity.csv");
      if (sm.flagged > 0) {
        std::cerr << "eval: " << sm.flagged << " similarity pair(s) had near-zero norms\n";
      }
    }
  }
  if (full) {
    const int n_seq = std::min(c.eval.sim_n_seq, test_ds.n_seq);
    const int dim = m.spec.latent_dim();
    const int n_points = n_seq * test_ds.n_t;
    if (n_points > dim) {
      std::vector<double> lat = eval::latent_trajectories(m, test_ds, n_seq);
      eval::PcaResult pca = eval::pca_embed(lat, n_points, dim, std::min(2, dim));
      eval::export_pca_csv(pca, n_seq, test_ds.n_t, c.output_dir + "/pca.csv",
                           c.output_dir + "/explained_variance.csv");
    }
  }
  cfg::save_json(c.to_json(), c.output_dir + "/eval_config.json");
  std::cout << "eval: wrote " << horizons.size() << " horizon rows to " << c.output_dir << "\n";
  return 0;
}

int cmd_ablate(const cfg::ExperimentConfig& base, const std::string& axis, int parallel) {
  const std::vector<AxisValue> grid = grid_for(axis);
  constexpr int kSeeds = 4;

  // Materialize every run config up front so validation failures surface
  // before any training starts.
  struct Run {
    std::string value;
    int seed_idx;
    cfg::ExperimentConfig c;
  };
  // Only the n_train axis changes the generator; every other axis can share
  // one dataset directory across its settings.
  const bool per_value_data = axis == "n_train";
  std::vector<cfg::ExperimentConfig> datasets;
  std::vector<Run> runs;
  for (const AxisValue& av : grid) {
    cfg::ExperimentConfig rc = base;
    av.apply(rc);
    rc.dataset.path = per_value_data ? base.output_dir + "/" + axis + "/" + av.text + "/data"
                                     : base.output_dir + "/" + axis + "/data";
    try {
      rc.model.validate();
      rc.train.validate();
      if (rc.train.lambda > 0.0 && rc.model.variant != model::Variant::kSinode) {
        throw ConfigError("nonzero lambda requires variant sinode");
      }
      if (rc.model.context_len() > rc.dataset.gen.n_t) {
        throw ConfigError("context needs " + std::to_string(rc.model.context_len()) +
                          " frames but sequences have " + std::to_string(rc.dataset.gen.n_t));
      }
    } catch (const ConfigError& e) {
      throw ConfigError("ablate " + axis + "=" + av.text + ": " + e.what());
    }
    datasets.push_back(rc);
    for (int k = 0; k < kSeeds; ++k) {
      Run r{av.text, k, rc};
      r.c.train.seed = base.train.seed + static_cast<std::uint64_t>(k);
      r.c.output_dir = base.output_dir + "/" + axis + "/" + av.text + "/seed" + std::to_string(k);
      r.c.eval.horizons = {"nt"};
      runs.push_back(std::move(r));
    }
  }

  // Datasets are shared by the four seeds of a setting; generate them once,
  // sequentially, before fanning out.
  for (const cfg::ExperimentConfig& dc : datasets) {
    if (!fs::exists(dc.dataset.path + "/test.ds")) cmd_generate(dc);
  }

  std::vector<std::function<int()>> jobs;
  jobs.reserve(runs.size());
  for (const Run& r : runs) {
    jobs.push_back([rc = r.c] {
      const int trc = cmd_train(rc);
      if (trc != 0) return trc;
      return cmd_eval(rc, "", /*full=*/false);
    });
  }
  const int worst = run_jobs(jobs, parallel);

  // Aggregate test MSE at horizon N_t from each run's metrics export.
  ensure_dir(base.output_dir);
  CsvWriter rows_csv(base.output_dir + "/ablation_" + axis + ".csv");
  rows_csv.row({"axis", "value", "seed", "mse"});
  CsvWriter summary_csv(base.output_dir + "/ablation_" + axis + "_summary.csv");
  summary_csv.row({"axis", "value", "mean_mse", "std_mse", "n_seeds"});
  for (const AxisValue& av : grid) {
    std::vector<double> mses;
    for (const Run& r : runs) {
      if (r.value != av.text) continue;
      const std::string metrics = r.c.output_dir + "/metrics.csv";
      if (!fs::exists(metrics)) {
        std::cerr << "ablate: no metrics for " << axis << "=" << av.text << " seed " << r.seed_idx
                  << " (run failed?)\n";
        continue;
      }
      for (const auto& row : read_csv(metrics)) {
        if (row.size() >= 5 && row[2] == "nt") {
          const double mse = std::stod(row[4]);
          mses.push_back(mse);
          rows_csv.row({axis, av.text, std::to_string(r.seed_idx), fmt_g9(mse)});
        }
      }
    }
    if (!mses.empty()) {
      summary_csv.row({axis, av.text, fmt_g9(mean_of(mses)), fmt_g9(sample_std(mses)),
                       std::to_string(mses.size())});
      std::cout << "ablate " << axis << "=" << av.text << ": mse " << fmt_g9(mean_of(mses))
                << " +/- " << fmt_g9(sample_std(mses)) << " over " << mses.size() << " seeds\n";
    }
  }
  rows_csv.close();
  summary_csv.close();
  std::cout << "ablate: summary in " << base.output_dir + "/ablation_" + axis + "_summary.csv"
            << "\n";
  return worst;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"invariant latent neural ODE lab"};
  app.require_subcommand(1);

  std::string config_path, out_override, resume_path, checkpoint_path, axis;
  std::uint64_t seed_override = 0;
  int parallel = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config JSON")->required();
    sub->add_option("--out", out_override, "override the output directory");
    sub->add_option("--seed", seed_override, "override dataset and train seeds");
  };
  CLI::App* gen_cmd = app.add_subcommand("generate", "write train/val/test dataset files");
  add_common(gen_cmd);
  CLI::App* train_cmd = app.add_subcommand("train", "fit a model and keep the best checkpoint");
  add_common(train_cmd);
  train_cmd->add_option("--resume", resume_path, "continue from a checkpoint");
  CLI::App* eval_cmd = app.add_subcommand("eval", "export metrics for a trained checkpoint");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate");
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "sweep one factor over the protocol grid");
  add_common(ablate_cmd);
  ablate_cmd->add_option("--axis", axis, "n_train | t_inv | solver | dims | lambda")->required();
  ablate_cmd->add_option("--parallel", parallel, "forked runs in flight")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }

  CLI::App* sub = app.get_subcommands().front();
  return guarded([&] {
    cfg::ExperimentConfig c = cfg::load_experiment(config_path);
    if (sub->count("--seed") > 0) {
      c.dataset.gen.seed = seed_override;
      c.train.seed = seed_override;
    }
    if (!out_override.empty()) c.output_dir = out_override;
    if (gen_cmd->parsed()) return cmd_generate(c);
    if (train_cmd->parsed()) return cmd_train(c, resume_path);
    if (eval_cmd->parsed()) return cmd_eval(c, checkpoint_path);
    return cmd_ablate(c, axis, parallel);
  });
}

}  // namespace inode::cli
