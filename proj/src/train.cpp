#include "inode/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "inode/csv.hpp"
#include "inode/errors.hpp"
#include "inode/objective.hpp"
#include "inode/plain.hpp"
#include "inode/rng.hpp"
#include "inode/threading.hpp"

namespace inode::train {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train: eps must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
  if (kl_warmup_epochs < 0) throw ConfigError("train: kl_warmup_epochs must be >= 0");
  if (val_mc_samples < 1) throw ConfigError("train: val_mc_samples must be >= 1");
  if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
}

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const TrainConfig& cfg) {
  if (params.size() != grad.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grad.size()) + " gradients");
  }
  if (state.m.empty()) state.m.assign(params.size(), 0.0);
  if (state.v.empty()) state.v.assign(params.size(), 0.0);
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: moment state does not match parameter count");
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw TrainingError("non-finite gradient at parameter entry " + std::to_string(i));
    }
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

double validation_mse(const model::Model& m, const data::Dataset& ds, int mc_samples,
                      std::uint64_t seed, int workers) {
  if (ds.dim != m.spec.data_dim) {
    throw ShapeError("validation_mse: model data_dim " + std::to_string(m.spec.data_dim) +
                     " vs dataset dim " + std::to_string(ds.dim));
  }
  if (mc_samples < 1) throw ConfigError("validation_mse: mc_samples must be >= 1");
  const ode::TimeGrid grid = ds.grid();
  const std::size_t frame_vals = static_cast<std::size_t>(ds.n_t) * ds.dim;

  std::vector<double> per_seq(static_cast<std::size_t>(ds.n_seq), 0.0);
  std::vector<char> excluded(static_cast<std::size_t>(ds.n_seq), 0);
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(ds.n_seq));
  parallel_for(ds.n_seq, workers, [&](int, int s) {
    try {
      ad::PlainEngine e(&m.params);
      auto seq = ds.seq(s);
      auto ctx = m.build_context(e, seq, ds.n_t);
      std::vector<double> pred(frame_vals, 0.0);
      std::vector<double> eps(static_cast<std::size_t>(m.spec.latent_dim()));
      for (int l = 0; l < mc_samples; ++l) {
        Rng rng = stream_rng(seed, Stream::kVal, static_cast<std::uint64_t>(s),
                             static_cast<std::uint64_t>(l));
        for (double& v : eps) v = rng.gauss();
        auto roll = m.sample_rollout(e, ctx, grid, eps);
        for (int t = 0; t < ds.n_t; ++t) {
          auto dv = e.value(roll.decoded[static_cast<std::size_t>(t)]);
          for (int d = 0; d < ds.dim; ++d) {
            pred[static_cast<std::size_t>(t) * ds.dim + d] += dv[static_cast<std::size_t>(d)];
          }
        }
      }
      double acc = 0.0;
      for (std::size_t k = 0; k < frame_vals; ++k) {
        const double r = seq[k] - pred[k] / mc_samples;
        acc += r * r;
      }
      per_seq[static_cast<std::size_t>(s)] = acc / static_cast<double>(frame_vals);
    } catch (const IntegrationError&) {
      excluded[static_cast<std::size_t>(s)] = 1;
    } catch (...) {
      errs[static_cast<std::size_t>(s)] = std::current_exception();
    }
  });
  for (const auto& ep : errs) {
    if (ep) std::rethrow_exception(ep);
  }

  double sum = 0.0;
  int used = 0;
  for (int s = 0; s < ds.n_seq; ++s) {
    if (excluded[static_cast<std::size_t>(s)]) continue;
    sum += per_seq[static_cast<std::size_t>(s)];
    ++used;
  }
  if (used == 0) return std::numeric_limits<double>::infinity();
  return sum / used;
}

namespace {

model::Checkpoint snapshot(const model::Model& m, const AdamState& adam, long step,
                           std::uint64_t seed) {
  model::Checkpoint ck;
  ck.spec = m.spec;
  ck.step = step;
  ck.seed = seed;
  ck.params = m.params.values();
  ck.adam_m = adam.m;
  ck.adam_v = adam.v;
  ck.adam_t = adam.t;
  return ck;
}

std::vector<int> epoch_order(int n, std::uint64_t seed, long epoch) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = stream_rng(seed, Stream::kShuffle, static_cast<std::uint64_t>(epoch));
  for (int i = n - 1; i >= 1; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

}  // namespace

TrainResult train(model::Model& m, const data::Dataset& train_ds, const data::Dataset& val_ds,
                  const TrainConfig& cfg, const std::string& log_path,
                  const model::Checkpoint* resume) {
  cfg.validate();
  if (train_ds.n_seq < 1) throw ConfigError("train: empty training split");

  AdamState adam;
  long step = 0;
  if (resume != nullptr) {
    if (resume->params.size() != m.params.size()) {
      throw ShapeError("train: resume checkpoint has " + std::to_string(resume->params.size()) +
                       " params, model has " + std::to_string(m.params.size()));
    }
    m.params.values() = resume->params;
    adam.m = resume->adam_m;
    adam.v = resume->adam_v;
    adam.t = resume->adam_t;
    step = resume->step;
  }

  const long spe = (train_ds.n_seq + cfg.batch_size - 1) / cfg.batch_size;  // steps per epoch
  const long epoch0 = step / spe;
  const long start_step = step;

  CsvWriter log(log_path);
  log.row({"step", "epoch", "elbo", "recon", "kl", "ssl", "total", "val_mse"});

  TrainResult res;
  res.best_val_mse = std::numeric_limits<double>::infinity();
  res.best = snapshot(m, adam, step, cfg.seed);
  model::Checkpoint last_good = res.best;
  int stale = 0;
  bool stop = false;

  for (long epoch = epoch0; epoch < cfg.max_epochs && !stop; ++epoch) {
    const auto order = epoch_order(train_ds.n_seq, cfg.seed, epoch);
    const double kl_scale =
        cfg.kl_warmup_epochs > 0
            ? std::min(1.0, static_cast<double>(epoch + 1) / cfg.kl_warmup_epochs)
            : 1.0;
    const long start_k = epoch == epoch0 ? step - epoch0 * spe : 0;
    bool epoch_complete = true;
    for (long k = start_k; k < spe; ++k) {
      const std::size_t lo = static_cast<std::size_t>(k) * cfg.batch_size;
      const std::size_t hi =
          std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      std::span<const int> batch(order.data() + lo, hi - lo);

      obj::ObjectiveOptions oo;
      oo.lambda = cfg.lambda;
      oo.kl_scale = kl_scale;
      oo.seed = cfg.seed;
      oo.step = step;
      oo.max_pairs = cfg.max_pairs;
      oo.workers = cfg.workers;

      const model::Checkpoint pre = snapshot(m, adam, step, cfg.seed);
      obj::BatchResult br;
      try {
        br = obj::total_objective(m, train_ds, batch, oo);
        adam_step(m.params.values(), br.grad, adam, cfg);
      } catch (const TrainingError&) {
        res.aborted = true;
      } catch (const IntegrationError&) {
        res.aborted = true;
      }
      if (res.aborted) {
        // pre evaluated finite on the previous step; the current params never
        // did, so roll the reported state back to the last good snapshot.
        res.last = last_good;
        res.steps = step - start_step;
        res.epochs = static_cast<int>(epoch - epoch0);
        return res;
      }
      last_good = pre;
      ++step;

      const bool epoch_end = k == spe - 1;
      std::string val_cell;
      if (epoch_end) {
        double val = std::numeric_limits<double>::infinity();
        try {
          val = validation_mse(m, val_ds, cfg.val_mc_samples, cfg.seed, cfg.workers);
        } catch (const IntegrationError&) {
        }
        val_cell = fmt_g9(val);
        if (val < res.best_val_mse) {
          res.best_val_mse = val;
          res.best = snapshot(m, adam, step, cfg.seed);
          stale = 0;
        } else {
          ++stale;
        }
        if (cfg.patience > 0 && stale > cfg.patience) stop = true;
      }
      log.row({std::to_string(step), std::to_string(epoch), fmt_g9(br.loss.elbo),
               fmt_g9(br.loss.recon), fmt_g9(br.loss.kl), fmt_g9(br.loss.ssl),
               fmt_g9(br.loss.total), val_cell});

      if (cfg.max_steps > 0 && step - start_step >= cfg.max_steps) {
        stop = true;
        epoch_complete = epoch_end;
        break;
      }
    }
    if (epoch_complete) res.epochs += 1;
  }

  res.last = snapshot(m, adam, step, cfg.seed);
  res.steps = step - start_step;
  log.close();
  return res;
}

}  // namespace inode::train
