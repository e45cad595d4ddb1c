#include "inode/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <utility>

#include "inode/errors.hpp"

namespace inode::cfg {
namespace {

// Per-dataset protocol defaults (splits, grids, architecture, schedule).
struct Protocol {
  int dim;
  int q;
  int t_in;
  int t_inv;
  int n_train, n_val, n_test;
  int n_t;
  double dt, sigma;
  int batch_size, max_epochs, patience;
};

const Protocol& protocol_for(const std::string& name, const std::string& field) {
  static const Protocol sinusoid{1, 4, 3, 10, 80, 25, 25, 50, 0.1, 0.1, 16, 300, 30};
  static const Protocol lv{2, 8, 8, 40, 500, 100, 100, 200, 0.1, 0.1, 32, 200, 30};
  static const Protocol sin_content{2, 4, 3, 10, 80, 25, 25, 50, 0.1, 0.1, 16, 300, 30};
  if (name == "sinusoid") return sinusoid;
  if (name == "lotka_volterra") return lv;
  if (name == "sinusoid_content") return sin_content;
  throw ConfigError(field + ": unknown dataset '" + name +
                    "' (expected sinusoid, lotka_volterra, or sinusoid_content)");
}

template <typename T>
const char* type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  if constexpr (std::is_same_v<T, int>) return "an integer";
  if constexpr (std::is_same_v<T, long>) return "an integer";
  if constexpr (std::is_same_v<T, std::uint64_t>) return "a non-negative integer";
  if constexpr (std::is_same_v<T, double>) return "a number";
  if constexpr (std::is_same_v<T, std::string>) return "a string";
  return "a value";
}

// One JSON object with field-path diagnostics and unknown-key rejection.
class Obj {
 public:
  Obj(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const std::string& path() const { return path_; }
  std::string at(const char* key) const { return path_ + "." + key; }

  template <typename T>
  T get(const char* key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return read<T>(key);
  }

  template <typename T>
  T require(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(at(key) + ": missing required field");
    return read<T>(key);
  }

  // Marks a sub-object as handled; returns nullptr when absent.
  const nlohmann::json* sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return nullptr;
    const nlohmann::json& v = j_.at(key);
    if (!v.is_object()) throw ConfigError(at(key) + ": expected an object");
    return &v;
  }

  const nlohmann::json* array(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return nullptr;
    const nlohmann::json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(at(key) + ": expected an array");
    return &v;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(path_ + "." + item.key() + ": unknown key");
    }
  }

 private:
  template <typename T>
  T read(const char* key) const {
    const nlohmann::json& v = j_.at(key);
    // nlohmann coerces between numeric types; keep integers and numbers apart
    // so "lr": "fast" or "q_x": 2.5 fail loudly.
    bool ok;
    if constexpr (std::is_same_v<T, double>) {
      ok = v.is_number();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      // Literals built in code store signed; parsed non-negatives store
      // unsigned. Accept both, reject anything below zero.
      ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = v.is_string();
    } else if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else {
      ok = v.is_number_integer();
    }
    if (!ok) throw ConfigError(at(key) + ": expected " + type_name<T>());
    return v.get<T>();
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Re-raises validator messages under the section's field path.
template <typename F>
void validated(const std::string& path, F&& body) {
  try {
    body();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig parse_experiment(const nlohmann::json& j) {
  Obj root(j, "config");
  ExperimentConfig out;

  const nlohmann::json* dsj = root.sub("dataset");
  if (!dsj) throw ConfigError("config.dataset: missing required field");
  Obj d(*dsj, "config.dataset");
  out.dataset.name = d.require<std::string>("name");
  const Protocol& proto = protocol_for(out.dataset.name, d.at("name"));
  out.dataset.path = d.get<std::string>("path", "data/" + out.dataset.name);
  out.dataset.gen.seed = d.require<std::uint64_t>("seed");
  out.dataset.gen.n_train = d.get("n_train", proto.n_train);
  out.dataset.gen.n_val = d.get("n_val", proto.n_val);
  out.dataset.gen.n_test = d.get("n_test", proto.n_test);
  out.dataset.gen.n_t = d.get("n_t", proto.n_t);
  out.dataset.gen.dt = d.get("dt", proto.dt);
  out.dataset.gen.sigma = d.get("sigma", proto.sigma);
  d.finish();
  validated(d.path(), [&] { out.dataset.gen.validate(); });

  model::ModelSpec& ms = out.model;
  ms.data_dim = proto.dim;
  ms.q_x = proto.q;
  ms.q_c = proto.q;
  ms.t_in = proto.t_in;
  ms.t_inv = proto.t_inv;
  ms.t_in_node = proto.t_inv;
  ms.n_e = std::max(3, proto.t_in);
  ms.solver.dt = out.dataset.gen.dt;
  if (const nlohmann::json* mj = root.sub("model")) {
    Obj m(*mj, "config.model");
    if (m.has("variant")) {
      validated(m.at("variant"),
                [&] { ms.variant = model::parse_variant(m.require<std::string>("variant")); });
    }
    if (m.has("pathways")) {
      validated(m.at("pathways"),
                [&] { ms.pathways = model::parse_pathways(m.require<std::string>("pathways")); });
    }
    ms.q_x = m.get("q_x", ms.q_x);
    ms.q_c = m.get("q_c", ms.q_c);
    ms.t_in = m.get("t_in", ms.t_in);
    ms.t_inv = m.get("t_inv", ms.t_inv);
    ms.t_in_node = m.get("t_in_node", ms.t_inv);
    ms.n_e = m.get("n_e", std::max(3, ms.t_in));
    if (m.has("data_dim") && m.require<int>("data_dim") != proto.dim) {
      throw ConfigError(m.at("data_dim") + ": dataset " + out.dataset.name + " has dimension " +
                        std::to_string(proto.dim));
    }
    ms.enc_hidden = m.get("enc_hidden", ms.enc_hidden);
    ms.dyn_hidden = m.get("dyn_hidden", ms.dyn_hidden);
    ms.dec_hidden = m.get("dec_hidden", ms.dec_hidden);
    if (m.has("activation")) {
      validated(m.at("activation"), [&] {
        ms.mlp_act = net::parse_activation(m.require<std::string>("activation"));
      });
    }
    if (const nlohmann::json* sj = m.sub("solver")) {
      Obj s(*sj, m.at("solver"));
      if (s.has("kind")) {
        validated(s.at("kind"),
                  [&] { ms.solver.kind = ode::parse_solver_kind(s.require<std::string>("kind")); });
      }
      ms.solver.dt = s.get("dt", ms.solver.dt);
      ms.solver.rtol = s.get("rtol", ms.solver.rtol);
      ms.solver.atol = s.get("atol", ms.solver.atol);
      s.finish();
    }
    ms.mc_samples = m.get("mc_samples", ms.mc_samples);
    m.finish();
  }
  validated("config.model", [&] { ms.validate(); });

  // Fixed-step solvers sub-step each observation interval; the step must
  // divide it or integration would fail on the first segment.
  if (ms.solver.kind != ode::SolverKind::kDopri5) {
    const double ratio = out.dataset.gen.dt / ms.solver.dt;
    const double n_sub = std::round(ratio);
    if (n_sub < 1.0 || std::abs(ratio - n_sub) > 1e-9 * ratio) {
      throw ConfigError("config.model.solver.dt: " + std::to_string(ms.solver.dt) +
                        " does not divide the observation interval " +
                        std::to_string(out.dataset.gen.dt));
    }
  }
  const int ctx = ms.context_len();
  if (ctx > out.dataset.gen.n_t) {
    throw ConfigError("config.model.t_inv: context needs " + std::to_string(ctx) +
                      " frames but sequences have " + std::to_string(out.dataset.gen.n_t));
  }

  train::TrainConfig& tc = out.train;
  tc.batch_size = proto.batch_size;
  tc.max_epochs = proto.max_epochs;
  tc.patience = proto.patience;
  tc.seed = out.dataset.gen.seed;
  tc.lambda = ms.variant == model::Variant::kSinode ? 1.0 : 0.0;
  if (const nlohmann::json* tj = root.sub("train")) {
    Obj t(*tj, "config.train");
    tc.lr = t.get("lr", tc.lr);
    tc.beta1 = t.get("beta1", tc.beta1);
    tc.beta2 = t.get("beta2", tc.beta2);
    tc.eps = t.get("eps", tc.eps);
    tc.batch_size = t.get("batch_size", tc.batch_size);
    tc.max_epochs = t.get("max_epochs", tc.max_epochs);
    tc.lambda = t.get("lambda", tc.lambda);
    tc.seed = t.get("seed", tc.seed);
    tc.kl_warmup_epochs = t.get("kl_warmup_epochs", tc.kl_warmup_epochs);
    tc.patience = t.get("patience", tc.patience);
    tc.max_pairs = t.get("max_pairs", tc.max_pairs);
    tc.val_mc_samples = t.get("val_mc_samples", tc.val_mc_samples);
    tc.workers = t.get("workers", tc.workers);
    tc.max_steps = t.get("max_steps", tc.max_steps);
    t.finish();
  }
  validated("config.train", [&] { tc.validate(); });
  if (tc.lambda > 0.0 && ms.variant != model::Variant::kSinode) {
    throw ConfigError("config.train.lambda: nonzero lambda requires variant sinode (got " +
                      std::string(model::variant_name(ms.variant)) + ")");
  }

  EvalSection& ev = out.eval;
  if (const nlohmann::json* ej = root.sub("eval")) {
    Obj e(*ej, "config.eval");
    if (const nlohmann::json* hj = e.array("horizons")) {
      ev.horizons.clear();
      for (std::size_t i = 0; i < hj->size(); ++i) {
        const nlohmann::json& h = (*hj)[i];
        const std::string where = e.at("horizons") + "[" + std::to_string(i) + "]";
        if (h.is_string()) {
          ev.horizons.push_back(h.get<std::string>());
        } else if (h.is_number_integer()) {
          ev.horizons.push_back(std::to_string(h.get<long>()));
        } else {
          throw ConfigError(where + ": expected a horizon name or frame count");
        }
      }
      if (ev.horizons.empty()) throw ConfigError(e.at("horizons") + ": must be nonempty");
    }
    ev.mc_samples = e.get("mc_samples", ev.mc_samples);
    ev.sim_n_seq = e.get("sim_n_seq", ev.sim_n_seq);
    ev.sim_n_frames = e.get("sim_n_frames", ev.sim_n_frames);
    e.finish();
    if (ev.mc_samples < 1) throw ConfigError(e.at("mc_samples") + ": must be >= 1");
    if (ev.sim_n_seq < 1) throw ConfigError(e.at("sim_n_seq") + ": must be >= 1");
    if (ev.sim_n_frames < 1) throw ConfigError(e.at("sim_n_frames") + ": must be >= 1");
  }
  // Horizons must expand cleanly even before data exists on disk.
  (void)resolve_horizons(ev.horizons, ms, out.dataset.gen.n_t);

  out.output_dir = root.get<std::string>(
      "output_dir", "runs/" + out.dataset.name + "-" + model::variant_name(ms.variant));
  if (out.output_dir.empty()) throw ConfigError("config.output_dir: must be nonempty");
  root.finish();
  return out;
}

ExperimentConfig load_experiment(const std::string& path) {
  return parse_experiment(load_json(path));
}

std::vector<eval::Horizon> resolve_horizons(const std::vector<std::string>& entries,
                                            const model::ModelSpec& spec, int n_t) {
  if (entries.empty()) throw ConfigError("eval.horizons: must be nonempty");
  std::vector<eval::Horizon> out;
  out.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string& e = entries[i];
    const std::string where = "eval.horizons[" + std::to_string(i) + "]";
    int len;
    if (e == "tin") {
      len = spec.t_in;
    } else if (e == "nt") {
      len = n_t;
    } else if (e == "3nt") {
      len = 3 * n_t;
    } else {
      std::size_t used = 0;
      try {
        len = std::stoi(e, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != e.size() || e.empty()) {
        throw ConfigError(where + ": unrecognized horizon '" + e +
                          "' (expected tin, nt, 3nt, or a frame count)");
      }
    }
    if (len < 1) throw ConfigError(where + ": horizon must cover at least one frame");
    out.push_back({e, len});
  }
  return out;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json ev_horizons = nlohmann::json::array();
  for (const std::string& h : eval.horizons) ev_horizons.push_back(h);
  return {{"output_dir", output_dir},
          {"dataset",
           {{"name", dataset.name},
            {"path", dataset.path},
            {"seed", dataset.gen.seed},
            {"n_train", dataset.gen.n_train},
            {"n_val", dataset.gen.n_val},
            {"n_test", dataset.gen.n_test},
            {"n_t", dataset.gen.n_t},
            {"dt", dataset.gen.dt},
            {"sigma", dataset.gen.sigma}}},
          {"model", model.to_json()},
          {"train",
           {{"lr", train.lr},
            {"beta1", train.beta1},
            {"beta2", train.beta2},
            {"eps", train.eps},
            {"batch_size", train.batch_size},
            {"max_epochs", train.max_epochs},
            {"lambda", train.lambda},
            {"seed", train.seed},
            {"kl_warmup_epochs", train.kl_warmup_epochs},
            {"patience", train.patience},
            {"max_pairs", train.max_pairs},
            {"val_mc_samples", train.val_mc_samples},
            {"workers", train.workers},
            {"max_steps", train.max_steps}}},
          {"eval",
           {{"horizons", ev_horizons},
            {"mc_samples", eval.mc_samples},
            {"sim_n_seq", eval.sim_n_seq},
            {"sim_n_frames", eval.sim_n_frames}}}};
}

void save_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MissingArtifact("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("write failed: " + path);
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("cannot open: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid JSON in " + path + ": " + e.what());
  }
}

}  // namespace inode::cfg
