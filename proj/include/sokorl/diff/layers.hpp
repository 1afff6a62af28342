#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sokorl/diff/graph.hpp"
#include "sokorl/diff/params.hpp"
#include "sokorl/rng.hpp"

namespace sokorl::diff {

// Builds or re-binds named parameters in a set. With an Rng the context creates
// freshly initialized tensors; without one it binds to existing entries (loaded
// checkpoints, target networks), validating shapes.
template <typename T>
struct NetCtx {
  ParameterSetT<T>& set;
  Rng* rng = nullptr;
  std::string scope;

  NetCtx sub(const std::string& s) const { return {set, rng, scope + s + "."}; }

  ParamT<T>* tensor(const std::string& name, std::vector<int> shape, T span) {
    const std::string full = scope + name;
    if (!rng) {
      ParamT<T>* p = set.find(full);
      if (!p) throw ConfigError("missing parameter while binding: " + full);
      if (p->value.shape != shape)
        throw ShapeError("bound parameter " + full + " has shape " + shape_str(p->value.shape) +
                         ", expected " + shape_str(shape));
      return p;
    }
    TensorT<T> init(shape);
    for (int64_t i = 0; i < init.size(); ++i)
      init[i] = static_cast<T>(rng->uniform(-static_cast<double>(span), static_cast<double>(span)));
    return set.create(full, std::move(init));
  }

  ParamT<T>* zeros(const std::string& name, std::vector<int> shape) {
    return tensor(name, std::move(shape), T(0));
  }
};

template <typename T>
T xavier_span(int fan_in, int fan_out) {
  return static_cast<T>(std::sqrt(6.0 / (fan_in + fan_out)));
}

template <typename T>
struct AffineLayer {
  ParamT<T>* w = nullptr;
  ParamT<T>* b = nullptr;

  AffineLayer() = default;
  AffineLayer(NetCtx<T> ctx, const std::string& name, int in, int out) {
    w = ctx.tensor(name + ".w", {in, out}, xavier_span<T>(in, out));
    b = ctx.zeros(name + ".b", {out});
  }

  typename GraphT<T>::Ref operator()(GraphT<T>& g, typename GraphT<T>::Ref x) const {
    return g.affine(x, g.param(*w), g.param(*b));
  }
};

template <typename T>
struct Conv1dLayer {
  ParamT<T>* w = nullptr;
  ParamT<T>* b = nullptr;
  int pad = 0, stride = 1;

  Conv1dLayer() = default;
  Conv1dLayer(NetCtx<T> ctx, const std::string& name, int cin, int cout, int kw, int pad_,
              int stride_)
      : pad(pad_), stride(stride_) {
    w = ctx.tensor(name + ".w", {cout, cin, kw}, xavier_span<T>(cin * kw, cout * kw));
    b = ctx.zeros(name + ".b", {cout});
  }

  typename GraphT<T>::Ref operator()(GraphT<T>& g, typename GraphT<T>::Ref x) const {
    return g.conv1d(x, g.param(*w), g.param(*b), pad, stride);
  }
};

template <typename T>
struct Conv2dLayer {
  ParamT<T>* w = nullptr;
  ParamT<T>* b = nullptr;
  int pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(NetCtx<T> ctx, const std::string& name, int cin, int cout, int kh, int kw,
              int pad_)
      : pad(pad_) {
    w = ctx.tensor(name + ".w", {cout, cin, kh, kw}, xavier_span<T>(cin * kh * kw, cout * kh * kw));
    b = ctx.zeros(name + ".b", {cout});
  }

  typename GraphT<T>::Ref operator()(GraphT<T>& g, typename GraphT<T>::Ref x) const {
    return g.conv2d(x, g.param(*w), g.param(*b), pad);
  }
};

// Long-short-term-memory cell on flat features. Gate order: input, forget,
// candidate, output; forget bias starts at +1.
template <typename T>
struct LSTMCell {
  AffineLayer<T> gates;
  int input = 0, hidden = 0;

  struct State {
    typename GraphT<T>::Ref h, c;
  };

  LSTMCell() = default;
  LSTMCell(NetCtx<T> ctx, const std::string& name, int in, int hid) : input(in), hidden(hid) {
    gates = AffineLayer<T>(ctx, name + ".gates", in + hid, 4 * hid);
    if (ctx.rng)
      for (int j = hid; j < 2 * hid; ++j) gates.b->value[j] = T(1);
  }

  State initial(GraphT<T>& g, int batch) const {
    return {g.constant(TensorT<T>::zeros({batch, hidden})),
            g.constant(TensorT<T>::zeros({batch, hidden}))};
  }

  State step(GraphT<T>& g, typename GraphT<T>::Ref x, State s) const {
    auto z = gates(g, g.concat_cols(x, s.h));
    auto i = g.sigmoid(g.slice_cols(z, 0, hidden));
    auto f = g.sigmoid(g.slice_cols(z, hidden, 2 * hidden));
    auto cand = g.tanh_act(g.slice_cols(z, 2 * hidden, 3 * hidden));
    auto o = g.sigmoid(g.slice_cols(z, 3 * hidden, 4 * hidden));
    auto c = g.add(g.mul(f, s.c), g.mul(i, cand));
    auto h = g.mul(o, g.tanh_act(c));
    return {h, c};
  }
};

// Convolutional-gate variant: state maps are [B, hidden_ch, H, W] and gates come
// from one 2D convolution over the channel-concatenated (input, h).
template <typename T>
struct ConvLSTMCell {
  Conv2dLayer<T> gates;
  int cin = 0, ch = 0;

  struct State {
    typename GraphT<T>::Ref h, c;
  };

  ConvLSTMCell() = default;
  ConvLSTMCell(NetCtx<T> ctx, const std::string& name, int cin_, int ch_, int k)
      : cin(cin_), ch(ch_) {
    gates = Conv2dLayer<T>(ctx, name + ".gates", cin_ + ch_, 4 * ch_, k, k, k / 2);
    if (ctx.rng)
      for (int j = ch_; j < 2 * ch_; ++j) gates.b->value[j] = T(1);
  }

  State initial(GraphT<T>& g, int batch, int h, int w) const {
    return {g.constant(TensorT<T>::zeros({batch, ch, h, w})),
            g.constant(TensorT<T>::zeros({batch, ch, h, w}))};
  }

  State step(GraphT<T>& g, typename GraphT<T>::Ref x, State s) const {
    auto z = gates(g, g.concat_axis1({x, s.h}));
    auto i = g.sigmoid(g.slice_axis1(z, 0, ch));
    auto f = g.sigmoid(g.slice_axis1(z, ch, 2 * ch));
    auto cand = g.tanh_act(g.slice_axis1(z, 2 * ch, 3 * ch));
    auto o = g.sigmoid(g.slice_axis1(z, 3 * ch, 4 * ch));
    auto c = g.add(g.mul(f, s.c), g.mul(i, cand));
    auto h = g.mul(o, g.tanh_act(c));
    return {h, c};
  }
};

// Fully connected stack with rectifier activations between layers (not after the
// last one).
template <typename T>
struct MLP {
  std::vector<AffineLayer<T>> layers;

  MLP() = default;
  MLP(NetCtx<T> ctx, const std::string& name, const std::vector<int>& dims) {
    for (size_t i = 0; i + 1 < dims.size(); ++i)
      layers.emplace_back(ctx, name + ".l" + std::to_string(i), dims[i], dims[i + 1]);
  }

  typename GraphT<T>::Ref operator()(GraphT<T>& g, typename GraphT<T>::Ref x) const {
    for (size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](g, x);
      if (i + 1 < layers.size()) x = g.relu(x);
    }
    return x;
  }
};

}  // namespace sokorl::diff
