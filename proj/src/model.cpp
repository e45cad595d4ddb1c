#include "inode/model.hpp"

#include <cmath>

#include "inode/container.hpp"

namespace inode::model {

Variant parse_variant(const std::string& name) {
  if (name == "node") return Variant::kNode;
  if (name == "inode") return Variant::kInode;
  if (name == "sinode") return Variant::kSinode;
  throw ConfigError("unknown variant '" + name + "' (expected node, inode, or sinode)");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kNode: return "node";
    case Variant::kInode: return "inode";
    case Variant::kSinode: return "sinode";
  }
  return "?";
}

Pathways parse_pathways(const std::string& name) {
  if (name == "modulator") return Pathways::kModulator;
  if (name == "content") return Pathways::kContent;
  if (name == "both") return Pathways::kBoth;
  throw ConfigError("unknown pathways '" + name + "' (expected modulator, content, or both)");
}

const char* pathways_name(Pathways p) {
  switch (p) {
    case Pathways::kModulator: return "modulator";
    case Pathways::kContent: return "content";
    case Pathways::kBoth: return "both";
  }
  return "?";
}

void ModelSpec::validate() const {
  if (q_x < 1 || q_c < 1) throw ConfigError("q_x and q_c must be >= 1");
  if (data_dim < 1) throw ConfigError("data_dim must be >= 1");
  if (t_in < 1) throw ConfigError("t_in must be >= 1");
  if (t_inv < t_in) throw ConfigError("protocol requires t_inv >= t_in");
  if (variant == Variant::kNode && t_in_node != t_inv) {
    throw ConfigError("fair-comparison contract: node t_in_node (" + std::to_string(t_in_node) +
                      ") must equal t_inv (" + std::to_string(t_inv) + ")");
  }
  if (has_modulator()) {
    if (n_e < 3) throw ConfigError("modulator pathway requires n_e >= 3");
    if (t_inv <= n_e) throw ConfigError("modulator pathway requires t_inv > n_e");
  }
  if (enc_hidden < 1 || dyn_hidden < 1 || dec_hidden < 1) {
    throw ConfigError("hidden widths must be >= 1");
  }
  if (mc_samples < 1) throw ConfigError("mc_samples must be >= 1");
  solver.validate();
}

nlohmann::json ModelSpec::to_json() const {
  return {{"variant", variant_name(variant)},
          {"pathways", pathways_name(pathways)},
          {"q_x", q_x},
          {"q_c", q_c},
          {"t_in", t_in},
          {"t_inv", t_inv},
          {"t_in_node", t_in_node},
          {"n_e", n_e},
          {"data_dim", data_dim},
          {"enc_hidden", enc_hidden},
          {"dyn_hidden", dyn_hidden},
          {"dec_hidden", dec_hidden},
          {"activation", net::activation_name(mlp_act)},
          {"solver",
           {{"kind", ode::solver_kind_name(solver.kind)},
            {"dt", solver.dt},
            {"rtol", solver.rtol},
            {"atol", solver.atol}}},
          {"mc_samples", mc_samples}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  try {
    s.variant = parse_variant(j.at("variant").get<std::string>());
    s.pathways = parse_pathways(j.at("pathways").get<std::string>());
    s.q_x = j.at("q_x").get<int>();
    s.q_c = j.at("q_c").get<int>();
    s.t_in = j.at("t_in").get<int>();
    s.t_inv = j.at("t_inv").get<int>();
    s.t_in_node = j.at("t_in_node").get<int>();
    s.n_e = j.at("n_e").get<int>();
    s.data_dim = j.at("data_dim").get<int>();
    s.enc_hidden = j.at("enc_hidden").get<int>();
    s.dyn_hidden = j.at("dyn_hidden").get<int>();
    s.dec_hidden = j.at("dec_hidden").get<int>();
    s.mlp_act = net::parse_activation(j.at("activation").get<std::string>());
    const auto& sv = j.at("solver");
    s.solver.kind = ode::parse_solver_kind(sv.at("kind").get<std::string>());
    s.solver.dt = sv.at("dt").get<double>();
    s.solver.rtol = sv.at("rtol").get<double>();
    s.solver.atol = sv.at("atol").get<double>();
    s.mc_samples = j.at("mc_samples").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model spec: ") + e.what());
  }
  s.validate();
  return s;
}

Model Model::create(ModelSpec spec) {
  spec.validate();
  Model m;
  m.spec = spec;
  const int latent = spec.latent_dim();

  m.enc = net::Gru::create(m.params, "nu.enc",
                           net::GruSpec{spec.data_dim, spec.enc_hidden, 0, false});
  m.enc_mu_w = m.params.add("nu.mu.w", ad::Shape::mat(latent, spec.enc_hidden));
  m.enc_mu_b = m.params.add("nu.mu.b", ad::Shape::vec(latent));
  m.enc_lv_w = m.params.add("nu.lv.w", ad::Shape::mat(latent, spec.enc_hidden));
  m.enc_lv_b = m.params.add("nu.lv.b", ad::Shape::vec(latent));

  if (spec.has_content()) {
    m.g_con = net::Gru::create(m.params, "psi.con",
                               net::GruSpec{spec.data_dim, spec.enc_hidden, spec.q_c, true});
  }
  if (spec.has_modulator()) {
    m.g_mod = net::Gru::create(m.params, "psi.mod",
                               net::GruSpec{spec.data_dim, spec.enc_hidden, spec.q_c, true});
  }

  const int dyn_in = latent + (spec.has_modulator() ? spec.q_c : 0);
  m.dyn = net::Mlp::create(m.params, "theta.dyn",
                           net::MlpSpec{{dyn_in, spec.dyn_hidden, latent}, spec.mlp_act,
                                        net::Activation::kNone});
  const int dec_in = latent + (spec.has_content() ? spec.q_c : 0);
  m.dec = net::Mlp::create(m.params, "xi.dec",
                           net::MlpSpec{{dec_in, spec.dec_hidden, spec.data_dim}, spec.mlp_act,
                                        net::Activation::kNone});

  m.sigma_obs_raw = m.params.add("sigma_obs_raw", ad::Shape::scalar());
  return m;
}

void Model::init(std::uint64_t seed) {
  net::init_params(params, seed);
  // softplus(raw) = 0.1, the generator noise level.
  params.slice(sigma_obs_raw)[0] = std::log(std::expm1(0.1));
}

double Model::sigma_obs() const {
  const double raw = params.slice(sigma_obs_raw)[0];
  return std::fmax(raw, 0.0) + std::log1p(std::exp(-std::abs(raw)));
}

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  nlohmann::json header{{"version", kCheckpointVersion},
                        {"kind", "checkpoint"},
                        {"spec", ck.spec.to_json()},
                        {"step", ck.step},
                        {"seed", ck.seed},
                        {"adam_t", ck.adam_t}};
  std::vector<std::pair<std::string, std::span<const double>>> arrays{{"params", ck.params}};
  if (!ck.adam_m.empty()) {
    arrays.emplace_back("adam_m", ck.adam_m);
    arrays.emplace_back("adam_v", ck.adam_v);
  }
  write_container(path, std::move(header), arrays);
}

Checkpoint load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  const auto& h = c.header;
  if (!h.contains("version") || !h["version"].is_number_integer() ||
      h["version"].get<int>() != kCheckpointVersion) {
    throw FormatError(path + ": checkpoint version mismatch: expected " +
                      std::to_string(kCheckpointVersion) + ", found " +
                      (h.contains("version") ? h["version"].dump() : "none"));
  }
  Checkpoint ck;
  try {
    ck.spec = ModelSpec::from_json(h.at("spec"));
    ck.step = h.at("step").get<long>();
    ck.seed = h.at("seed").get<std::uint64_t>();
    ck.adam_t = h.value("adam_t", 0L);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed checkpoint header: " + e.what());
  }
  auto it = c.arrays.find("params");
  if (it == c.arrays.end()) throw FormatError(path + ": checkpoint missing params array");
  ck.params = std::move(it->second);
  if (auto m = c.arrays.find("adam_m"); m != c.arrays.end()) ck.adam_m = std::move(m->second);
  if (auto v = c.arrays.find("adam_v"); v != c.arrays.end()) ck.adam_v = std::move(v->second);
  if (ck.adam_m.size() != ck.adam_v.size()) {
    throw FormatError(path + ": inconsistent optimizer moment arrays");
  }
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
  Model m = Model::create(ck.spec);
  if (ck.params.size() != m.params.size()) {
    throw FormatError("checkpoint param vector has " + std::to_string(ck.params.size()) +
                      " values, model expects " + std::to_string(m.params.size()));
  }
  m.params.values() = ck.params;
  return m;
}

}  // namespace inode::model
