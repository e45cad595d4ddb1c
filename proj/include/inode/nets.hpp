#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inode/params.hpp"
#include "inode/shape.hpp"

namespace inode::net {

enum class Activation { kTanh, kRelu, kSoftplus, kNone };

Activation parse_activation(const std::string& name);  // throws ConfigError
const char* activation_name(Activation a);

template <typename E>
typename E::Ref apply_activation(E& e, typename E::Ref x, Activation a) {
  switch (a) {
    case Activation::kTanh: return e.tanh(x);
    case Activation::kRelu: return e.relu(x);
    case Activation::kSoftplus: return e.softplus(x);
    case Activation::kNone: return x;
  }
  return x;
}

// Full width chain [in, hidden..., out]; at least one hidden layer.
struct MlpSpec {
  std::vector<int> widths;
  Activation act = Activation::kTanh;
  Activation final_act = Activation::kNone;

  void validate() const;
  int in() const { return widths.front(); }
  int out() const { return widths.back(); }
};

// Affine stack bound to named ParamStore slices "<prefix>.w0/.b0/...".
struct Mlp {
  MlpSpec spec;
  std::vector<int> w_idx, b_idx;

  static Mlp create(ad::ParamStore& ps, const std::string& prefix, MlpSpec spec);

  template <typename E>
  typename E::Ref forward(E& e, typename E::Ref x) const {
    const int layers = static_cast<int>(w_idx.size());
    auto h = x;
    for (int l = 0; l < layers; ++l) {
      h = e.affine(e.param(w_idx[static_cast<std::size_t>(l)]), h,
                   e.param(b_idx[static_cast<std::size_t>(l)]));
      h = apply_activation(e, h, l + 1 < layers ? spec.act : spec.final_act);
    }
    return h;
  }
};

struct GruSpec {
  int in = 1;
  int hidden = 64;
  int out = 1;
  bool readout = true;  // false: caller attaches its own heads to the hidden state

  void validate() const;
};

// Single-layer gated recurrent encoder with a linear readout of the final
// hidden state. Gate matrices are stored combined as [3H x in]/[3H x H] in
// (update, reset, candidate) order with one bias on the input side.
struct Gru {
  GruSpec spec;
  int wx = -1, wh = -1, b = -1, w_out = -1, b_out = -1;

  static Gru create(ad::ParamStore& ps, const std::string& prefix, GruSpec spec);

  // One cell update h' = n + z*(h - n).
  template <typename E>
  typename E::Ref cell(E& e, typename E::Ref x, typename E::Ref h) const {
    const int H = spec.hidden;
    auto gx = e.affine(e.param(wx), x, e.param(b));
    auto gh = e.matvec(e.param(wh), h);
    auto zr = e.sigmoid(e.add(e.slice(gx, 0, 2 * H), e.slice(gh, 0, 2 * H)));
    auto z = e.slice(zr, 0, H);
    auto r = e.slice(zr, H, H);
    auto n = e.tanh(e.add(e.slice(gx, 2 * H, H), e.mul(r, e.slice(gh, 2 * H, H))));
    return e.add(n, e.mul(z, e.sub(h, n)));
  }

  // Frames are passed in chronological order; the recurrence consumes them
  // newest-first so the final hidden state sits next to the earliest frame.
  template <typename E>
  typename E::Ref encode_hidden(E& e, std::span<const typename E::Ref> frames) const {
    const std::vector<double> zeros(static_cast<std::size_t>(spec.hidden), 0.0);
    auto h = e.constant_vec(zeros);
    for (std::size_t i = frames.size(); i-- > 0;) h = cell(e, frames[i], h);
    return h;
  }

  template <typename E>
  typename E::Ref encode(E& e, std::span<const typename E::Ref> frames) const {
    return e.affine(e.param(w_out), encode_hidden(e, frames), e.param(b_out));
  }
};

// Glorot-uniform on every rank-2 slice (fan_out = rows, fan_in = cols), zeros
// elsewhere; draws follow registration order, so layouts are reproducible.
void init_params(ad::ParamStore& ps, std::uint64_t seed);

}  // namespace inode::net
