#include "inode/nets.hpp"

#include <cmath>

#include "inode/errors.hpp"
#include "inode/rng.hpp"

namespace inode::net {

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "softplus") return Activation::kSoftplus;
  if (name == "none") return Activation::kNone;
  throw ConfigError("unknown activation '" + name + "' (expected tanh, relu, softplus, or none)");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSoftplus: return "softplus";
    case Activation::kNone: return "none";
  }
  return "?";
}

void MlpSpec::validate() const {
  if (widths.size() < 3) throw ConfigError("mlp needs at least one hidden layer");
  for (int w : widths) {
    if (w < 1) throw ConfigError("mlp layer widths must be >= 1");
  }
}

Mlp Mlp::create(ad::ParamStore& ps, const std::string& prefix, MlpSpec spec) {
  spec.validate();
  Mlp mlp;
  mlp.spec = std::move(spec);
  const auto& w = mlp.spec.widths;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const std::string tag = std::to_string(l);
    mlp.w_idx.push_back(ps.add(prefix + ".w" + tag, ad::Shape::mat(w[l + 1], w[l])));
    mlp.b_idx.push_back(ps.add(prefix + ".b" + tag, ad::Shape::vec(w[l + 1])));
  }
  return mlp;
}

void GruSpec::validate() const {
  if (in < 1 || hidden < 1) throw ConfigError("gru dims must be >= 1");
  if (readout && out < 1) throw ConfigError("gru dims must be >= 1");
}

Gru Gru::create(ad::ParamStore& ps, const std::string& prefix, GruSpec spec) {
  spec.validate();
  Gru gru;
  gru.spec = spec;
  gru.wx = ps.add(prefix + ".wx", ad::Shape::mat(3 * spec.hidden, spec.in));
  gru.wh = ps.add(prefix + ".wh", ad::Shape::mat(3 * spec.hidden, spec.hidden));
  gru.b = ps.add(prefix + ".b", ad::Shape::vec(3 * spec.hidden));
  if (spec.readout) {
    gru.w_out = ps.add(prefix + ".w_out", ad::Shape::mat(spec.out, spec.hidden));
    gru.b_out = ps.add(prefix + ".b_out", ad::Shape::vec(spec.out));
  }
  return gru;
}

void init_params(ad::ParamStore& ps, std::uint64_t seed) {
  Rng rng = stream_rng(seed, Stream::kInit);
  for (int i = 0; i < ps.count(); ++i) {
    const auto& e = ps.entry(i);
    auto dst = ps.slice(i);
    if (e.shape.rank == 2) {
      const double limit = std::sqrt(6.0 / (e.shape.dim[0] + e.shape.dim[1]));
      for (double& v : dst) v = rng.uniform(-limit, limit);
    } else {
      for (double& v : dst) v = 0.0;
    }
  }
}

}  // namespace inode::net
