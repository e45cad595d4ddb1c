#include "inode/datagen.hpp"

#include <cmath>
#include <cstring>

#include "inode/container.hpp"
#include "inode/errors.hpp"
#include "inode/plain.hpp"
#include "inode/rng.hpp"

namespace inode::data {

namespace {

constexpr int kVersion = 1;
constexpr const char* kSplitNames[3] = {"train", "val", "test"};

// Fine-step ground-truth integrator for LV: RK4 at dt/20.
constexpr int kLvSubsteps = 20;

int split_count(const GenConfig& cfg, int split) {
  return split == 0 ? cfg.n_train : split == 1 ? cfg.n_val : cfg.n_test;
}

// The test split carries 3*n_t frames for long-horizon metrics.
int split_len(const GenConfig& cfg, int split) { return split == 2 ? 3 * cfg.n_t : cfg.n_t; }

Dataset make_split(const GenConfig& cfg, const char* name, int split, int dim, int n_params) {
  Dataset ds;
  ds.name = name;
  ds.split = kSplitNames[split];
  ds.n_seq = split_count(cfg, split);
  ds.n_t = split_len(cfg, split);
  ds.dim = dim;
  ds.n_params = n_params;
  ds.dt = cfg.dt;
  ds.sigma = cfg.sigma;
  ds.seed = cfg.seed;
  ds.obs.resize(static_cast<std::size_t>(ds.n_seq) * ds.n_t * dim);
  ds.true_params.resize(static_cast<std::size_t>(ds.n_seq) * n_params);
  return ds;
}

void add_noise(std::span<double> frame_block, Rng& rng, double sigma) {
  for (double& v : frame_block) v += sigma * rng.gauss();
}

}  // namespace

void GenConfig::validate() const {
  if (n_train < 1 || n_val < 1 || n_test < 1) throw ConfigError("split sizes must be >= 1");
  if (n_t < 2) throw ConfigError("n_t must be >= 2");
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
}

SplitBundle gen_sinusoid(const GenConfig& cfg) {
  cfg.validate();
  SplitBundle bundle;
  for (int split = 0; split < 3; ++split) {
    Dataset ds = make_split(cfg, "sinusoid", split, 1, 3);
    for (int s = 0; s < ds.n_seq; ++s) {
      Rng rng = stream_rng(cfg.seed, Stream::kData, static_cast<std::uint64_t>(split),
                           static_cast<std::uint64_t>(s));
      const double a = rng.uniform(1.0, 3.0);
      const double f = rng.uniform(0.5, 1.0);
      const double phi = rng.uniform(0.0, 1.0);
      double* p = ds.true_params.data() + static_cast<std::size_t>(s) * 3;
      p[0] = a;
      p[1] = f;
      p[2] = phi;
      double* y = ds.obs.data() + static_cast<std::size_t>(s) * ds.n_t;
      for (int i = 0; i < ds.n_t; ++i) y[i] = a * std::sin(f * (i * cfg.dt) + phi);
      add_noise({y, static_cast<std::size_t>(ds.n_t)}, rng, cfg.sigma);
    }
    (split == 0 ? bundle.train : split == 1 ? bundle.val : bundle.test) = std::move(ds);
  }
  return bundle;
}

SplitBundle gen_lotka_volterra(const GenConfig& cfg) {
  cfg.validate();
  SplitBundle bundle;
  for (int split = 0; split < 3; ++split) {
    Dataset ds = make_split(cfg, "lotka_volterra", split, 2, 4);
    for (int s = 0; s < ds.n_seq; ++s) {
      Rng rng = stream_rng(cfg.seed, Stream::kData, static_cast<std::uint64_t>(split),
                           static_cast<std::uint64_t>(s));
      const double alpha = rng.uniform(0.1, 0.4);
      const double gamma = rng.uniform(0.1, 0.4);
      const double x0[2] = {rng.uniform(2.0, 10.0), rng.uniform(2.0, 10.0)};
      double* p = ds.true_params.data() + static_cast<std::size_t>(s) * 4;
      p[0] = alpha;
      p[1] = gamma;
      p[2] = x0[0];
      p[3] = x0[1];

      // dx1 = alpha*x1 - x1*x2/2, dx2 = x1*x2/5 - gamma*x2  (Eq. lv).
      const auto field = [alpha, gamma](auto& e, auto x) {
        auto x1 = e.slice(x, 0, 1);
        auto x2 = e.slice(x, 1, 1);
        auto prod = e.mul(x1, x2);
        auto d1 = e.axpy(e.scale(x1, alpha), prod, -0.5);
        auto d2 = e.axpy(e.scale(prod, 0.2), x2, -gamma);
        return e.concat(d1, d2);
      };

      ad::PlainEngine e;
      std::vector<ad::PlainEngine::Ref> states;
      try {
        states = ode::integrate(e, field, e.constant_vec(x0), ds.grid(),
                                ode::SolverSpec{ode::SolverKind::kRk4, cfg.dt / kLvSubsteps});
      } catch (const IntegrationError& err) {
        throw IntegrationError(std::string(err.what()) + " in " + ds.split + " sequence " +
                                   std::to_string(s),
                               err.time);
      }

      double* y = ds.obs.data() + static_cast<std::size_t>(s) * ds.n_t * 2;
      for (int i = 0; i < ds.n_t; ++i) {
        auto v = e.value(states[static_cast<std::size_t>(i)]);
        y[2 * i] = v[0];
        y[2 * i + 1] = v[1];
      }
      add_noise({y, static_cast<std::size_t>(ds.n_t) * 2}, rng, cfg.sigma);
    }
    (split == 0 ? bundle.train : split == 1 ? bundle.val : bundle.test) = std::move(ds);
  }
  return bundle;
}

SplitBundle gen_sinusoid_with_content(const GenConfig& cfg) {
  cfg.validate();
  SplitBundle bundle;
  for (int split = 0; split < 3; ++split) {
    Dataset ds = make_split(cfg, "sinusoid_content", split, 2, 4);
    for (int s = 0; s < ds.n_seq; ++s) {
      Rng rng = stream_rng(cfg.seed, Stream::kData, static_cast<std::uint64_t>(split),
                           static_cast<std::uint64_t>(s));
      const double a = rng.uniform(1.0, 3.0);
      const double f = rng.uniform(0.5, 1.0);
      const double phi = rng.uniform(0.0, 1.0);
      const double b = rng.uniform(-1.0, 1.0);  // pure content: constant in time
      double* p = ds.true_params.data() + static_cast<std::size_t>(s) * 4;
      p[0] = a;
      p[1] = f;
      p[2] = phi;
      p[3] = b;
      double* y = ds.obs.data() + static_cast<std::size_t>(s) * ds.n_t * 2;
      for (int i = 0; i < ds.n_t; ++i) {
        y[2 * i] = a * std::sin(f * (i * cfg.dt) + phi);
        y[2 * i + 1] = b;
      }
      add_noise({y, static_cast<std::size_t>(ds.n_t) * 2}, rng, cfg.sigma);
    }
    (split == 0 ? bundle.train : split == 1 ? bundle.val : bundle.test) = std::move(ds);
  }
  return bundle;
}

SplitBundle generate(const std::string& dataset, const GenConfig& cfg) {
  if (dataset == "sinusoid") return gen_sinusoid(cfg);
  if (dataset == "lotka_volterra") return gen_lotka_volterra(cfg);
  if (dataset == "sinusoid_content") return gen_sinusoid_with_content(cfg);
  throw ConfigError("unknown dataset '" + dataset +
                    "' (expected sinusoid, lotka_volterra, or sinusoid_content)");
}

void save_dataset(const Dataset& ds, const std::string& path) {
  nlohmann::json header{{"version", kVersion}, {"dataset", ds.name},   {"n_seq", ds.n_seq},
                        {"n_t", ds.n_t},       {"dim", ds.dim},        {"dt", ds.dt},
                        {"sigma", ds.sigma},   {"seed", ds.seed},      {"split", ds.split}};
  write_container(path, std::move(header),
                  {{"observations", ds.obs}, {"true_params", ds.true_params}});
}

Dataset load_dataset(const std::string& path) {
  Container c = read_container(path);
  const auto& h = c.header;
  if (!h.contains("version") || !h["version"].is_number_integer()) {
    throw FormatError(path + ": dataset header missing version");
  }
  if (h["version"].get<int>() != kVersion) {
    throw FormatError(path + ": dataset version mismatch: expected " + std::to_string(kVersion) +
                      ", found " + h["version"].dump());
  }
  Dataset ds;
  try {
    ds.name = h.at("dataset").get<std::string>();
    ds.split = h.at("split").get<std::string>();
    ds.n_seq = h.at("n_seq").get<int>();
    ds.n_t = h.at("n_t").get<int>();
    ds.dim = h.at("dim").get<int>();
    ds.dt = h.at("dt").get<double>();
    ds.sigma = h.at("sigma").get<double>();
    ds.seed = h.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed dataset header: " + e.what());
  }
  if (ds.n_seq < 1 || ds.n_t < 1 || ds.dim < 1) {
    throw FormatError(path + ": invalid dataset dimensions in header");
  }
  auto obs_it = c.arrays.find("observations");
  auto par_it = c.arrays.find("true_params");
  if (obs_it == c.arrays.end() || par_it == c.arrays.end()) {
    throw FormatError(path + ": dataset container missing observations/true_params arrays");
  }
  ds.obs = std::move(obs_it->second);
  ds.true_params = std::move(par_it->second);
  const std::size_t want = static_cast<std::size_t>(ds.n_seq) * ds.n_t * ds.dim;
  if (ds.obs.size() != want) {
    throw FormatError(path + ": observations array has " + std::to_string(ds.obs.size()) +
                      " values, header implies " + std::to_string(want));
  }
  if (ds.true_params.size() % static_cast<std::size_t>(ds.n_seq) != 0) {
    throw FormatError(path + ": true_params length not divisible by n_seq");
  }
  ds.n_params = static_cast<int>(ds.true_params.size() / static_cast<std::size_t>(ds.n_seq));
  return ds;
}

}  // namespace inode::data
