#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "inode/errors.hpp"
#include "inode/nets.hpp"
#include "inode/odeint.hpp"
#include "inode/params.hpp"

namespace inode::model {

// inode = latent NODE with invariant pathways; sinode = inode trained with
// the SSL cosine objective (lambda > 0). The architectures are identical.
enum class Variant { kNode, kInode, kSinode };
enum class Pathways { kModulator, kContent, kBoth };

Variant parse_variant(const std::string& name);
const char* variant_name(Variant v);
Pathways parse_pathways(const std::string& name);
const char* pathways_name(Pathways p);

struct ModelSpec {
  Variant variant = Variant::kInode;
  Pathways pathways = Pathways::kModulator;
  int q_x = 4;
  int q_c = 4;
  int t_in = 3;        // initial-state encoder frames (inode/sinode)
  int t_inv = 10;      // invariant context frames
  int t_in_node = 10;  // NODE encoder frames; must equal t_inv (fair comparison)
  int n_e = 3;         // modulator window length
  int data_dim = 1;
  int enc_hidden = 64;
  int dyn_hidden = 64;
  int dec_hidden = 64;
  net::Activation mlp_act = net::Activation::kTanh;
  ode::SolverSpec solver{ode::SolverKind::kEuler, 0.1, 1e-5, 1e-6};
  int mc_samples = 20;  // L

  bool has_modulator() const {
    return variant != Variant::kNode && pathways != Pathways::kContent;
  }
  bool has_content() const {
    return variant != Variant::kNode && pathways != Pathways::kModulator;
  }
  // NODE folds q_c into the latent state so every variant integrates a
  // (q_x+q_c)-dimensional generative system.
  int latent_dim() const { return variant == Variant::kNode ? q_x + q_c : q_x; }
  int enc_len() const { return variant == Variant::kNode ? t_in_node : t_in; }
  int context_len() const { return variant == Variant::kNode ? t_in_node : t_inv; }
  int n_windows() const { return t_inv - n_e; }

  void validate() const;
  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

template <typename E>
struct Posterior {
  typename E::Ref mu;
  typename E::Ref log_var;
};

// Sample-independent per-sequence quantities: the posterior over x_1 and the
// invariants (with the raw embeddings they average, reused by the SSL term).
template <typename E>
struct Context {
  Posterior<E> q{};
  typename E::Ref c = -1;  // -1: pathway inactive
  typename E::Ref m = -1;
  std::vector<typename E::Ref> content_embs;
  std::vector<typename E::Ref> window_embs;
};

template <typename E>
struct Rollout {
  typename E::Ref x1;
  std::vector<typename E::Ref> latents;
  std::vector<typename E::Ref> decoded;
};

// Builds constant frame nodes from a flat [n_frames x dim] block.
template <typename E>
std::vector<typename E::Ref> make_frames(E& e, std::span<const double> seq, int n_frames,
                                         int dim) {
  std::vector<typename E::Ref> out;
  out.reserve(static_cast<std::size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) {
    out.push_back(e.constant_vec(seq.subspan(static_cast<std::size_t>(i) * dim,
                                             static_cast<std::size_t>(dim))));
  }
  return out;
}

struct Model {
  ModelSpec spec;
  ad::ParamStore params;
  net::Gru enc;  // q_nu body; mean/log-var heads below
  int enc_mu_w = -1, enc_mu_b = -1, enc_lv_w = -1, enc_lv_b = -1;
  net::Gru g_con;  // content extractor (frames), valid when has_content()
  net::Gru g_mod;  // modulator extractor (windows), valid when has_modulator()
  net::Mlp dyn;
  net::Mlp dec;
  int sigma_obs_raw = -1;

  static Model create(ModelSpec spec);
  void init(std::uint64_t seed);  // Glorot + observation-noise scale at 0.1
  double sigma_obs() const;

  template <typename E>
  Posterior<E> encode_initial(E& e, std::span<const typename E::Ref> frames) const {
    if (static_cast<int>(frames.size()) != spec.enc_len()) {
      throw ShapeError("encode_initial expects " + std::to_string(spec.enc_len()) +
                       " frames, got " + std::to_string(frames.size()));
    }
    auto h = enc.encode_hidden(e, frames);
    return {e.affine(e.param(enc_mu_w), h, e.param(enc_mu_b)),
            e.affine(e.param(enc_lv_w), h, e.param(enc_lv_b))};
  }

  // Reparameterized draw mu + exp(log_var/2)*eps; eps enters as a constant.
  template <typename E>
  typename E::Ref sample_initial(E& e, const Posterior<E>& q,
                                 std::span<const double> eps) const {
    auto std_dev = e.exp(e.scale(q.log_var, 0.5));
    return e.add(q.mu, e.mul(std_dev, e.constant_vec(eps)));
  }

  template <typename E>
  static typename E::Ref mean_refs(E& e, const std::vector<typename E::Ref>& xs) {
    auto acc = xs[0];
    for (std::size_t i = 1; i < xs.size(); ++i) acc = e.add(acc, xs[i]);
    return e.scale(acc, 1.0 / static_cast<double>(xs.size()));
  }

  template <typename E>
  std::vector<typename E::Ref> frame_embeddings(E& e,
                                                std::span<const typename E::Ref> frames) const {
    std::vector<typename E::Ref> out;
    out.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) out.push_back(g_con.encode(e, frames.subspan(i, 1)));
    return out;
  }

  // Windows [w, w+N_e) for w in [0, T_inv-N_e): the §3.1 construction.
  template <typename E>
  std::vector<typename E::Ref> window_embeddings(E& e,
                                                 std::span<const typename E::Ref> frames) const {
    std::vector<typename E::Ref> out;
    const int count = spec.n_windows();
    out.reserve(static_cast<std::size_t>(count));
    for (int w = 0; w < count; ++w) {
      out.push_back(g_mod.encode(e, frames.subspan(static_cast<std::size_t>(w),
                                                   static_cast<std::size_t>(spec.n_e))));
    }
    return out;
  }

  template <typename E>
  typename E::Ref extract_content(E& e, std::span<const typename E::Ref> frames) const {
    return mean_refs(e, frame_embeddings(e, frames));
  }

  template <typename E>
  typename E::Ref extract_modulator(E& e, std::span<const typename E::Ref> frames) const {
    return mean_refs(e, window_embeddings(e, frames));
  }

  // seq is a flat [seq_len x data_dim] context prefix; only the first
  // context_len() frames are consumed.
  template <typename E>
  Context<E> build_context(E& e, std::span<const double> seq, int seq_len) const {
    if (seq_len < spec.context_len()) {
      throw ShapeError("context needs " + std::to_string(spec.context_len()) +
                       " frames, sequence has " + std::to_string(seq_len));
    }
    auto frames = make_frames(e, seq, spec.context_len(), spec.data_dim);
    std::span<const typename E::Ref> fspan(frames);
    Context<E> ctx;
    ctx.q = encode_initial(e, fspan.subspan(0, static_cast<std::size_t>(spec.enc_len())));
    if (spec.has_modulator()) {
      ctx.window_embs = window_embeddings(e, fspan.subspan(0, static_cast<std::size_t>(spec.t_inv)));
      ctx.m = mean_refs(e, ctx.window_embs);
    }
    if (spec.has_content()) {
      ctx.content_embs = frame_embeddings(e, fspan.subspan(0, static_cast<std::size_t>(spec.t_inv)));
      ctx.c = mean_refs(e, ctx.content_embs);
    }
    return ctx;
  }

  template <typename E>
  typename E::Ref dynamics(E& e, typename E::Ref x, typename E::Ref m) const {
    return dyn.forward(e, m < 0 ? x : e.concat(x, m));
  }

  template <typename E>
  typename E::Ref decode(E& e, typename E::Ref x, typename E::Ref c) const {
    return dec.forward(e, c < 0 ? x : e.concat(x, c));
  }

  // One MC sample: draw x_1, integrate, decode every grid point.
  template <typename E>
  Rollout<E> sample_rollout(E& e, const Context<E>& ctx, const ode::TimeGrid& grid,
                            std::span<const double> eps) const {
    Rollout<E> roll;
    roll.x1 = sample_initial(e, ctx.q, eps);
    const auto field = [this, &ctx](E& en, typename E::Ref x) {
      return dynamics(en, x, ctx.m);
    };
    roll.latents = ode::integrate(e, field, roll.x1, grid, spec.solver);
    roll.decoded.reserve(roll.latents.size());
    for (auto x : roll.latents) roll.decoded.push_back(decode(e, x, ctx.c));
    return roll;
  }
};

// Self-describing checkpoint: spec + flat params (+ optional Adam moments so
// training can resume exactly).
struct Checkpoint {
  ModelSpec spec;
  long step = 0;
  std::uint64_t seed = 0;
  std::vector<double> params;
  std::vector<double> adam_m, adam_v;
  long adam_t = 0;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
Model model_from_checkpoint(const Checkpoint& ck);

}  // namespace inode::model
