#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sokorl/diff/kernels.hpp"
#include "sokorl/diff/params.hpp"
#include "sokorl/diff/tensor.hpp"
#include "sokorl/errors.hpp"

namespace sokorl::diff {

// Reverse-mode tape. One graph instance per forward/backward pass, single
// threaded. Every op validates shapes and checks outputs for NaN/Inf.
//
// Conventions:
//   - 2D tensors are [rows, cols]; batched feature matrices are [B, features].
//   - 4D tensors are [B, C, H, W]; 3D are [B, C, L].
//   - "const" arguments (plain TensorT) receive no gradient.
template <typename T>
class GraphT {
 public:
  struct Ref {
    int i = -1;
    bool valid() const { return i >= 0; }
  };

  explicit GraphT(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  const TensorT<T>& val(Ref r) const { return nodes_[static_cast<size_t>(r.i)].val; }
  const TensorT<T>& grad(Ref r) const { return nodes_[static_cast<size_t>(r.i)].grad; }

  // ---- leaves ----

  Ref constant(TensorT<T> v) { return push(std::move(v), false, nullptr); }

  Ref param(ParamT<T>& p) {
    if (!recording_) return push(TensorT<T>(p.value), false, nullptr);
    Ref r = push(TensorT<T>(p.value), true, nullptr);
    node(r).back = [this, r, &p]() {
      const TensorT<T>& g = node(r).grad;
      for (int64_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
    };
    return r;
  }

  // ---- elementwise / shape ----

  Ref add(Ref a, Ref b) {
    require_same(a, b, "add");
    TensorT<T> out(val(a).shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] + val(b)[i];
    return unary_or_binary(std::move(out), a, b, [this](Ref r, Ref a2, Ref b2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i) da[i] += g[i];
      });
      accum(b2, [&](TensorT<T>& db) {
        for (int64_t i = 0; i < g.size(); ++i) db[i] += g[i];
      });
    });
  }

  Ref sub(Ref a, Ref b) {
    require_same(a, b, "sub");
    TensorT<T> out(val(a).shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] - val(b)[i];
    return unary_or_binary(std::move(out), a, b, [this](Ref r, Ref a2, Ref b2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i) da[i] += g[i];
      });
      accum(b2, [&](TensorT<T>& db) {
        for (int64_t i = 0; i < g.size(); ++i) db[i] -= g[i];
      });
    });
  }

  Ref mul(Ref a, Ref b) {
    require_same(a, b, "mul");
    TensorT<T> out(val(a).shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] * val(b)[i];
    return unary_or_binary(std::move(out), a, b, [this](Ref r, Ref a2, Ref b2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * val(b2)[i];
      });
      accum(b2, [&](TensorT<T>& db) {
        for (int64_t i = 0; i < g.size(); ++i) db[i] += g[i] * val(a2)[i];
      });
    });
  }

  Ref scale(Ref a, T c) {
    TensorT<T> out(val(a).shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] * c;
    return unary(std::move(out), a, [this, c](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * c;
      });
    });
  }

  Ref add_scalar(Ref a, T c) {
    TensorT<T> out(val(a).shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] + c;
    return unary(std::move(out), a, [this](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i) da[i] += g[i];
      });
    });
  }

  // Elementwise product with a non-differentiable tensor (masks, weights).
  Ref mul_const(Ref a, const TensorT<T>& w) {
    if (val(a).shape != w.shape) throw ShapeError("mul_const shape mismatch");
    TensorT<T> out(val(a).shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] * w[i];
    TensorT<T> wc = w;
    return unary(std::move(out), a, [this, wc](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * wc[i];
      });
    });
  }

  Ref reshape(Ref a, std::vector<int> shape) {
    if (shape_size(shape) != val(a).size())
      throw ShapeError("reshape size mismatch: " + shape_str(val(a).shape) + " -> " +
                       shape_str(shape));
    TensorT<T> out(shape, val(a).data);
    return unary(std::move(out), a, [this](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i) da[i] += g[i];
      });
    });
  }

  Ref transpose2d(Ref a) {
    require_rank(a, 2, "transpose2d");
    const int m = val(a).dim(0), n = val(a).dim(1);
    TensorT<T> out({n, m});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out[static_cast<int64_t>(j) * m + i] = val(a)[static_cast<int64_t>(i) * n + j];
    return unary(std::move(out), a, [this, m, n](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            da[static_cast<int64_t>(i) * n + j] += g[static_cast<int64_t>(j) * m + i];
      });
    });
  }

  // Concatenation along axis 1 of [d0, d1, rest...] tensors.
  Ref concat_axis1(const std::vector<Ref>& xs) {
    if (xs.empty()) throw ShapeError("concat of nothing");
    const auto& s0 = val(xs[0]).shape;
    int d1 = 0;
    for (Ref x : xs) {
      const auto& s = val(x).shape;
      if (s.size() != s0.size() || s[0] != s0[0]) throw ShapeError("concat_axis1 rank/batch mismatch");
      for (size_t k = 2; k < s.size(); ++k)
        if (s[k] != s0[k]) throw ShapeError("concat_axis1 trailing-dim mismatch");
      d1 += s[1];
    }
    std::vector<int> oshape = s0;
    oshape[1] = d1;
    const int64_t inner = trailing(s0);
    const int b = s0[0];
    TensorT<T> out(oshape);
    int64_t off = 0;
    for (Ref x : xs) {
      const int64_t w = val(x).dim(1) * inner;
      for (int i = 0; i < b; ++i)
        std::copy_n(val(x).data.data() + i * w, w,
                    out.data.data() + static_cast<int64_t>(i) * d1 * inner + off);
      off += w;
    }
    std::vector<Ref> ins = xs;
    Ref r = push(std::move(out), any_needs_grad(ins), nullptr);
    if (node(r).needs_grad)
      node(r).back = [this, r, ins, d1, inner, b]() {
        const TensorT<T>& g = node(r).grad;
        int64_t o = 0;
        for (Ref x : ins) {
          const int64_t w = val(x).dim(1) * inner;
          accum(x, [&](TensorT<T>& dx) {
            for (int i = 0; i < b; ++i) {
              const T* gs = g.data.data() + static_cast<int64_t>(i) * d1 * inner + o;
              T* dd = dx.data.data() + i * w;
              for (int64_t j = 0; j < w; ++j) dd[j] += gs[j];
            }
          });
          o += w;
        }
      };
    return r;
  }

  Ref concat_cols(Ref a, Ref b) { return concat_axis1({a, b}); }

  // Slice [lo, hi) along axis 1.
  Ref slice_axis1(Ref a, int lo, int hi) {
    const auto& s = val(a).shape;
    if (s.size() < 2 || lo < 0 || hi > s[1] || lo >= hi) throw ShapeError("slice_axis1 bounds");
    const int64_t inner = trailing(s);
    const int b = s[0], d1 = s[1], w = hi - lo;
    std::vector<int> oshape = s;
    oshape[1] = w;
    TensorT<T> out(oshape);
    for (int i = 0; i < b; ++i)
      std::copy_n(val(a).data.data() + (static_cast<int64_t>(i) * d1 + lo) * inner, w * inner,
                  out.data.data() + static_cast<int64_t>(i) * w * inner);
    return unary(std::move(out), a, [this, lo, b, d1, w, inner](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int i = 0; i < b; ++i) {
          const T* gs = g.data.data() + static_cast<int64_t>(i) * w * inner;
          T* dd = da.data.data() + (static_cast<int64_t>(i) * d1 + lo) * inner;
          for (int64_t j = 0; j < static_cast<int64_t>(w) * inner; ++j) dd[j] += gs[j];
        }
      });
    });
  }

  Ref slice_cols(Ref a, int lo, int hi) { return slice_axis1(a, lo, hi); }

  // Repeats a [1, ...] tensor b times along axis 0 (for trainable initial states).
  Ref broadcast_batch(Ref a, int b) {
    const auto& s = val(a).shape;
    if (s.empty() || s[0] != 1) throw ShapeError("broadcast_batch needs leading dim 1");
    std::vector<int> oshape = s;
    oshape[0] = b;
    const int64_t w = val(a).size();
    TensorT<T> out(oshape);
    for (int i = 0; i < b; ++i) std::copy_n(val(a).data.data(), w, out.data.data() + i * w);
    return unary(std::move(out), a, [this, b, w](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int i = 0; i < b; ++i) {
          const T* gs = g.data.data() + i * w;
          for (int64_t j = 0; j < w; ++j) da[j] += gs[j];
        }
      });
    });
  }

  // Repeats each row of [B, n] m times consecutively -> [B*m, n].
  Ref repeat_rows(Ref a, int m) {
    require_rank(a, 2, "repeat_rows");
    const int b = val(a).dim(0), n = val(a).dim(1);
    TensorT<T> out({b * m, n});
    for (int i = 0; i < b; ++i)
      for (int k = 0; k < m; ++k)
        std::copy_n(val(a).data.data() + static_cast<int64_t>(i) * n, n,
                    out.data.data() + (static_cast<int64_t>(i) * m + k) * n);
    return unary(std::move(out), a, [this, b, m, n](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int i = 0; i < b; ++i)
          for (int k = 0; k < m; ++k) {
            const T* gs = g.data.data() + (static_cast<int64_t>(i) * m + k) * n;
            T* dd = da.data.data() + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) dd[j] += gs[j];
          }
      });
    });
  }

  // ---- reductions ----

  Ref sum(Ref a) {
    T acc = T(0);
    for (int64_t i = 0; i < val(a).size(); ++i) acc += val(a)[i];
    return unary(TensorT<T>::scalar(acc), a, [this](Ref r, Ref a2) {
      const T g = node(r).grad[0];
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < da.size(); ++i) da[i] += g;
      });
    });
  }

  Ref mean(Ref a) { return scale(sum(a), T(1) / static_cast<T>(val(a).size())); }

  // ---- nonlinearities ----

  Ref relu(Ref a) {
    TensorT<T> out(val(a).shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = val(a)[i] > T(0) ? val(a)[i] : T(0);
    return unary(std::move(out), a, [this](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i)
          if (val(a2)[i] > T(0)) da[i] += g[i];
      });
    });
  }

  Ref tanh_act(Ref a) {
    TensorT<T> out(val(a).shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(val(a)[i]);
    return unary(std::move(out), a, [this](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      const TensorT<T>& y = node(r).val;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * (T(1) - y[i] * y[i]);
      });
    });
  }

  Ref sigmoid(Ref a) {
    TensorT<T> out(val(a).shape);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = sigm(val(a)[i]);
    return unary(std::move(out), a, [this](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      const TensorT<T>& y = node(r).val;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (T(1) - y[i]);
      });
    });
  }

  // Hard clamp; subgradient zero outside the open interval.
  Ref clamp(Ref a, T lo, T hi) {
    TensorT<T> out(val(a).shape);
    for (int64_t i = 0; i < out.size(); ++i)
      out[i] = val(a)[i] < lo ? lo : (val(a)[i] > hi ? hi : val(a)[i]);
    return unary(std::move(out), a, [this, lo, hi](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int64_t i = 0; i < g.size(); ++i)
          if (val(a2)[i] > lo && val(a2)[i] < hi) da[i] += g[i];
      });
    });
  }

  // ---- linear algebra ----

  Ref matmul(Ref a, Ref b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int m = val(a).dim(0), k = val(a).dim(1), n = val(b).dim(1);
    if (val(b).dim(0) != k)
      throw ShapeError("matmul inner-dim mismatch: " + shape_str(val(a).shape) + " x " +
                       shape_str(val(b).shape));
    TensorT<T> out({m, n});
    gemm_nn(val(a).data.data(), val(b).data.data(), out.data.data(), m, k, n);
    return unary_or_binary(std::move(out), a, b, [this, m, k, n](Ref r, Ref a2, Ref b2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        gemm_nt(g.data.data(), val(b2).data.data(), da.data.data(), m, n, k);
      });
      accum(b2, [&](TensorT<T>& db) {
        gemm_tn(val(a2).data.data(), g.data.data(), db.data.data(), k, m, n);
      });
    });
  }

  // y = x W + b, x:[B,in] W:[in,out] b:[out]
  Ref affine(Ref x, Ref w, Ref b) {
    require_rank(x, 2, "affine");
    require_rank(w, 2, "affine");
    const int bs = val(x).dim(0), in = val(x).dim(1), out_n = val(w).dim(1);
    if (val(w).dim(0) != in || val(b).size() != out_n)
      throw ShapeError("affine shape mismatch: x" + shape_str(val(x).shape) + " W" +
                       shape_str(val(w).shape) + " b" + shape_str(val(b).shape));
    TensorT<T> out({bs, out_n});
    for (int i = 0; i < bs; ++i)
      std::copy_n(val(b).data.data(), out_n, out.data.data() + static_cast<int64_t>(i) * out_n);
    gemm_nn(val(x).data.data(), val(w).data.data(), out.data.data(), bs, in, out_n);
    std::vector<Ref> ins = {x, w, b};
    Ref r = push(std::move(out), any_needs_grad(ins), nullptr);
    if (node(r).needs_grad)
      node(r).back = [this, r, x, w, b, bs, in, out_n]() {
        const TensorT<T>& g = node(r).grad;
        accum(x, [&](TensorT<T>& dx) {
          gemm_nt(g.data.data(), val(w).data.data(), dx.data.data(), bs, out_n, in);
        });
        accum(w, [&](TensorT<T>& dw) {
          gemm_tn(val(x).data.data(), g.data.data(), dw.data.data(), in, bs, out_n);
        });
        accum(b, [&](TensorT<T>& db) {
          for (int i = 0; i < bs; ++i)
            for (int j = 0; j < out_n; ++j) db[j] += g[static_cast<int64_t>(i) * out_n + j];
        });
      };
    return r;
  }

  // ---- convolutions (stride 1 for 2D; configurable stride for 1D) ----

  Ref conv2d(Ref x, Ref k, Ref b, int pad) {
    require_rank(x, 4, "conv2d");
    require_rank(k, 4, "conv2d");
    const int bs = val(x).dim(0), cin = val(x).dim(1), h = val(x).dim(2), w = val(x).dim(3);
    const int cout = val(k).dim(0), kh = val(k).dim(2), kw = val(k).dim(3);
    if (val(k).dim(1) != cin || val(b).size() != cout) throw ShapeError("conv2d shape mismatch");
    const int oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("conv2d output collapsed");
    const int64_t colrows = static_cast<int64_t>(cin) * kh * kw;
    const int64_t ospat = static_cast<int64_t>(oh) * ow;
    TensorT<T> out({bs, cout, oh, ow});
    std::vector<T> col(static_cast<size_t>(colrows * ospat));
    for (int i = 0; i < bs; ++i) {
      im2col_2d(val(x).data.data() + static_cast<int64_t>(i) * cin * h * w, cin, h, w, kh, kw,
                pad, col.data());
      T* ob = out.data.data() + static_cast<int64_t>(i) * cout * ospat;
      for (int c = 0; c < cout; ++c)
        for (int64_t s = 0; s < ospat; ++s) ob[c * ospat + s] = val(b)[c];
      gemm_nn(val(k).data.data(), col.data(), ob, cout, static_cast<int>(colrows),
              static_cast<int>(ospat));
    }
    std::vector<Ref> ins = {x, k, b};
    Ref r = push(std::move(out), any_needs_grad(ins), nullptr);
    if (node(r).needs_grad)
      node(r).back = [this, r, x, k, b, bs, cin, h, w, cout, kh, kw, pad, colrows, ospat]() {
        const TensorT<T>& g = node(r).grad;
        std::vector<T> col(static_cast<size_t>(colrows * ospat));
        std::vector<T> dcol(static_cast<size_t>(colrows * ospat));
        for (int i = 0; i < bs; ++i) {
          const T* gb = g.data.data() + static_cast<int64_t>(i) * cout * ospat;
          im2col_2d(val(x).data.data() + static_cast<int64_t>(i) * cin * h * w, cin, h, w, kh,
                    kw, pad, col.data());
          accum(k, [&](TensorT<T>& dk) {
            gemm_nt(gb, col.data(), dk.data.data(), cout, static_cast<int>(ospat),
                    static_cast<int>(colrows));
          });
          accum(b, [&](TensorT<T>& db) {
            for (int c = 0; c < cout; ++c)
              for (int64_t s = 0; s < ospat; ++s) db[c] += gb[c * ospat + s];
          });
          accum(x, [&](TensorT<T>& dx) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            gemm_tn(val(k).data.data(), gb, dcol.data(), static_cast<int>(colrows), cout,
                    static_cast<int>(ospat));
            col2im_2d(dcol.data(), cin, h, w, kh, kw, pad,
                      dx.data.data() + static_cast<int64_t>(i) * cin * h * w);
          });
        }
      };
    return r;
  }

  Ref conv1d(Ref x, Ref k, Ref b, int pad, int stride) {
    require_rank(x, 3, "conv1d");
    require_rank(k, 3, "conv1d");
    const int bs = val(x).dim(0), cin = val(x).dim(1), l = val(x).dim(2);
    const int cout = val(k).dim(0), kw = val(k).dim(2);
    if (val(k).dim(1) != cin || val(b).size() != cout) throw ShapeError("conv1d shape mismatch");
    const int ol = (l + 2 * pad - kw) / stride + 1;
    if (ol <= 0) throw ShapeError("conv1d output collapsed");
    const int64_t colrows = static_cast<int64_t>(cin) * kw;
    TensorT<T> out({bs, cout, ol});
    std::vector<T> col(static_cast<size_t>(colrows * ol));
    for (int i = 0; i < bs; ++i) {
      im2col_1d(val(x).data.data() + static_cast<int64_t>(i) * cin * l, cin, l, kw, pad, stride,
                col.data());
      T* ob = out.data.data() + static_cast<int64_t>(i) * cout * ol;
      for (int c = 0; c < cout; ++c)
        for (int s = 0; s < ol; ++s) ob[static_cast<int64_t>(c) * ol + s] = val(b)[c];
      gemm_nn(val(k).data.data(), col.data(), ob, cout, static_cast<int>(colrows), ol);
    }
    std::vector<Ref> ins = {x, k, b};
    Ref r = push(std::move(out), any_needs_grad(ins), nullptr);
    if (node(r).needs_grad)
      node(r).back = [this, r, x, k, b, bs, cin, l, cout, kw, pad, stride, colrows, ol]() {
        const TensorT<T>& g = node(r).grad;
        std::vector<T> col(static_cast<size_t>(colrows * ol));
        std::vector<T> dcol(static_cast<size_t>(colrows * ol));
        for (int i = 0; i < bs; ++i) {
          const T* gb = g.data.data() + static_cast<int64_t>(i) * cout * ol;
          im2col_1d(val(x).data.data() + static_cast<int64_t>(i) * cin * l, cin, l, kw, pad,
                    stride, col.data());
          accum(k, [&](TensorT<T>& dk) {
            gemm_nt(gb, col.data(), dk.data.data(), cout, ol, static_cast<int>(colrows));
          });
          accum(b, [&](TensorT<T>& db) {
            for (int c = 0; c < cout; ++c)
              for (int s = 0; s < ol; ++s) db[c] += gb[static_cast<int64_t>(c) * ol + s];
          });
          accum(x, [&](TensorT<T>& dx) {
            std::fill(dcol.begin(), dcol.end(), T(0));
            gemm_tn(val(k).data.data(), gb, dcol.data(), static_cast<int>(colrows), cout, ol);
            col2im_1d(dcol.data(), cin, l, kw, pad, stride,
                      dx.data.data() + static_cast<int64_t>(i) * cin * l);
          });
        }
      };
    return r;
  }

  // ---- rows-of-distributions heads ----

  Ref softmax_rows(Ref a) {
    require_rank(a, 2, "softmax_rows");
    const int b = val(a).dim(0), n = val(a).dim(1);
    TensorT<T> out({b, n});
    for (int i = 0; i < b; ++i) stable_softmax(val(a).data.data() + static_cast<int64_t>(i) * n,
                                               out.data.data() + static_cast<int64_t>(i) * n, n);
    return unary(std::move(out), a, [this, b, n](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      const TensorT<T>& p = node(r).val;
      accum(a2, [&](TensorT<T>& da) {
        for (int i = 0; i < b; ++i) {
          const T* gr = g.data.data() + static_cast<int64_t>(i) * n;
          const T* pr = p.data.data() + static_cast<int64_t>(i) * n;
          T dot = T(0);
          for (int j = 0; j < n; ++j) dot += gr[j] * pr[j];
          T* dr = da.data.data() + static_cast<int64_t>(i) * n;
          for (int j = 0; j < n; ++j) dr[j] += pr[j] * (gr[j] - dot);
        }
      });
    });
  }

  // Per-row cross entropy of softmax(logits) against integer labels -> [B,1].
  Ref softmax_ce_rows(Ref logits, const std::vector<int>& labels) {
    require_rank(logits, 2, "softmax_ce_rows");
    const int b = val(logits).dim(0), n = val(logits).dim(1);
    if (static_cast<int>(labels.size()) != b) throw ShapeError("labels/batch mismatch");
    for (int y : labels)
      if (y < 0 || y >= n) throw ShapeError("label out of range");
    TensorT<T> out({b, 1});
    for (int i = 0; i < b; ++i) {
      const T* z = val(logits).data.data() + static_cast<int64_t>(i) * n;
      out[i] = logsumexp(z, n) - z[labels[static_cast<size_t>(i)]];
    }
    std::vector<int> lab = labels;
    return unary(std::move(out), logits, [this, b, n, lab](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        std::vector<T> p(static_cast<size_t>(n));
        for (int i = 0; i < b; ++i) {
          const T* z = val(a2).data.data() + static_cast<int64_t>(i) * n;
          stable_softmax(z, p.data(), n);
          T* dr = da.data.data() + static_cast<int64_t>(i) * n;
          const T gi = g[i];
          for (int j = 0; j < n; ++j) dr[j] += gi * p[j];
          dr[lab[static_cast<size_t>(i)]] -= gi;
        }
      });
    });
  }

  // Cross entropy against full target distributions (rows sum to 1) -> [B,1].
  Ref soft_ce_rows(Ref logits, const TensorT<T>& targets) {
    require_rank(logits, 2, "soft_ce_rows");
    if (val(logits).shape != targets.shape) throw ShapeError("soft_ce_rows target mismatch");
    const int b = val(logits).dim(0), n = val(logits).dim(1);
    TensorT<T> out({b, 1});
    for (int i = 0; i < b; ++i) {
      const T* z = val(logits).data.data() + static_cast<int64_t>(i) * n;
      const T* t = targets.data.data() + static_cast<int64_t>(i) * n;
      const T lse = logsumexp(z, n);
      T acc = T(0);
      for (int j = 0; j < n; ++j) acc += t[j] * (lse - z[j]);
      out[i] = acc;
    }
    TensorT<T> tc = targets;
    return unary(std::move(out), logits, [this, b, n, tc](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        std::vector<T> p(static_cast<size_t>(n));
        for (int i = 0; i < b; ++i) {
          const T* z = val(a2).data.data() + static_cast<int64_t>(i) * n;
          stable_softmax(z, p.data(), n);
          const T* t = tc.data.data() + static_cast<int64_t>(i) * n;
          T* dr = da.data.data() + static_cast<int64_t>(i) * n;
          const T gi = g[i];
          for (int j = 0; j < n; ++j) dr[j] += gi * (p[j] - t[j]);
        }
      });
    });
  }

  // KL(softmax(logits) || ref_probs) per row -> [B,1]; ref receives no gradient.
  Ref kl_categorical_rows(Ref logits, const TensorT<T>& ref_probs) {
    require_rank(logits, 2, "kl_categorical_rows");
    if (val(logits).shape != ref_probs.shape) throw ShapeError("kl_categorical ref mismatch");
    const int b = val(logits).dim(0), n = val(logits).dim(1);
    TensorT<T> out({b, 1});
    for (int i = 0; i < b; ++i) {
      const T* z = val(logits).data.data() + static_cast<int64_t>(i) * n;
      const T* q = ref_probs.data.data() + static_cast<int64_t>(i) * n;
      std::vector<T> p(static_cast<size_t>(n));
      stable_softmax(z, p.data(), n);
      T acc = T(0);
      for (int j = 0; j < n; ++j)
        if (p[j] > T(0)) acc += p[j] * (std::log(p[j]) - safe_log(q[j]));
      out[i] = acc;
    }
    TensorT<T> qc = ref_probs;
    return unary(std::move(out), logits, [this, b, n, qc](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      const TensorT<T>& klv = node(r).val;
      accum(a2, [&](TensorT<T>& da) {
        std::vector<T> p(static_cast<size_t>(n));
        for (int i = 0; i < b; ++i) {
          const T* z = val(a2).data.data() + static_cast<int64_t>(i) * n;
          stable_softmax(z, p.data(), n);
          const T* q = qc.data.data() + static_cast<int64_t>(i) * n;
          T* dr = da.data.data() + static_cast<int64_t>(i) * n;
          const T gi = g[i];
          for (int j = 0; j < n; ++j) {
            const T aj = (p[j] > T(0)) ? (std::log(p[j]) - safe_log(q[j])) : T(0);
            dr[j] += gi * p[j] * (aj - klv[i]);
          }
        }
      });
    });
  }

  // Binary cross entropy with logits, summed per row -> [B,1]; targets constant.
  Ref bce_logits_rows(Ref logits, const TensorT<T>& targets) {
    require_rank(logits, 2, "bce_logits_rows");
    if (val(logits).shape != targets.shape) throw ShapeError("bce target mismatch");
    const int b = val(logits).dim(0), n = val(logits).dim(1);
    TensorT<T> out({b, 1});
    for (int i = 0; i < b; ++i) {
      T acc = T(0);
      for (int j = 0; j < n; ++j) {
        const T x = val(logits)[static_cast<int64_t>(i) * n + j];
        const T t = targets[static_cast<int64_t>(i) * n + j];
        acc += std::max(x, T(0)) - x * t + std::log1p(std::exp(-std::abs(x)));
      }
      out[i] = acc;
    }
    TensorT<T> tc = targets;
    return unary(std::move(out), logits, [this, b, n, tc](Ref r, Ref a2) {
      const TensorT<T>& g = node(r).grad;
      accum(a2, [&](TensorT<T>& da) {
        for (int i = 0; i < b; ++i) {
          const T gi = g[i];
          for (int j = 0; j < n; ++j) {
            const T x = val(a2)[static_cast<int64_t>(i) * n + j];
            da[static_cast<int64_t>(i) * n + j] += gi * (sigm(x) - tc[static_cast<int64_t>(i) * n + j]);
          }
        }
      });
    });
  }

  // Log-density of a tanh-squashed diagonal Gaussian at pre-squash points u
  // (constant), summed over action dims -> [B,1].
  //   log p(a) = sum_d [ -0.5 z^2 - logstd - 0.5 log(2π) - log(1 - tanh(u)^2 + eps) ],
  //   z = (u - mean) / exp(logstd).
  Ref gaussian_tanh_logprob(Ref mean, Ref logstd, const TensorT<T>& u) {
    require_same(mean, logstd, "gaussian_tanh_logprob");
    if (val(mean).shape != u.shape) throw ShapeError("logprob action shape mismatch");
    const int b = val(mean).dim(0), n = val(mean).dim(1);
    constexpr T kHalfLog2Pi = T(0.91893853320467274178);
    constexpr T kSquashEps = T(1e-6);
    TensorT<T> out({b, 1});
    for (int i = 0; i < b; ++i) {
      T acc = T(0);
      for (int j = 0; j < n; ++j) {
        const int64_t ix = static_cast<int64_t>(i) * n + j;
        const T ls = val(logstd)[ix];
        const T z = (u[ix] - val(mean)[ix]) * std::exp(-ls);
        const T th = std::tanh(u[ix]);
        acc += -T(0.5) * z * z - ls - kHalfLog2Pi - std::log(T(1) - th * th + kSquashEps);
      }
      out[i] = acc;
    }
    TensorT<T> uc = u;
    std::vector<Ref> ins = {mean, logstd};
    Ref r = push(std::move(out), any_needs_grad(ins), nullptr);
    if (node(r).needs_grad)
      node(r).back = [this, r, mean, logstd, uc, b, n]() {
        const TensorT<T>& g = node(r).grad;
        auto walk = [&](auto&& fn) {
          for (int i = 0; i < b; ++i) {
            const T gi = g[i];
            for (int j = 0; j < n; ++j) {
              const int64_t ix = static_cast<int64_t>(i) * n + j;
              const T inv = std::exp(-val(logstd)[ix]);
              const T z = (uc[ix] - val(mean)[ix]) * inv;
              fn(ix, gi, z, inv);
            }
          }
        };
        accum(mean, [&](TensorT<T>& dm) {
          walk([&](int64_t ix, T gi, T z, T inv) { dm[ix] += gi * z * inv; });
        });
        accum(logstd, [&](TensorT<T>& dl) {
          walk([&](int64_t ix, T gi, T z, T) { dl[ix] += gi * (z * z - T(1)); });
        });
      };
    return r;
  }

  // KL(N(mean, e^logstd) || N(ref_mean, e^ref_logstd)) per row -> [B,1].
  Ref kl_diag_gauss(Ref mean, Ref logstd, const TensorT<T>& ref_mean,
                    const TensorT<T>& ref_logstd) {
    require_same(mean, logstd, "kl_diag_gauss");
    if (val(mean).shape != ref_mean.shape || val(mean).shape != ref_logstd.shape)
      throw ShapeError("kl_diag_gauss ref mismatch");
    const int b = val(mean).dim(0), n = val(mean).dim(1);
    TensorT<T> out({b, 1});
    for (int i = 0; i < b; ++i) {
      T acc = T(0);
      for (int j = 0; j < n; ++j) {
        const int64_t ix = static_cast<int64_t>(i) * n + j;
        const T ln = val(logstd)[ix], lp = ref_logstd[ix];
        const T dm = val(mean)[ix] - ref_mean[ix];
        const T ivp = std::exp(T(-2) * lp);
        acc += lp - ln + T(0.5) * (std::exp(T(2) * ln) + dm * dm) * ivp - T(0.5);
      }
      out[i] = acc;
    }
    TensorT<T> rm = ref_mean, rl = ref_logstd;
    std::vector<Ref> ins = {mean, logstd};
    Ref r = push(std::move(out), any_needs_grad(ins), nullptr);
    if (node(r).needs_grad)
      node(r).back = [this, r, mean, logstd, rm, rl, b, n]() {
        const TensorT<T>& g = node(r).grad;
        accum(mean, [&](TensorT<T>& dm) {
          for (int i = 0; i < b; ++i)
            for (int j = 0; j < n; ++j) {
              const int64_t ix = static_cast<int64_t>(i) * n + j;
              dm[ix] += g[i] * (val(mean)[ix] - rm[ix]) * std::exp(T(-2) * rl[ix]);
            }
        });
        accum(logstd, [&](TensorT<T>& dl) {
          for (int i = 0; i < b; ++i)
            for (int j = 0; j < n; ++j) {
              const int64_t ix = static_cast<int64_t>(i) * n + j;
              dl[ix] += g[i] * (std::exp(T(2) * (val(logstd)[ix] - rl[ix])) - T(1));
            }
        });
      };
    return r;
  }

  // ---- backward ----

  void backward(Ref loss) {
    if (val(loss).size() != 1) throw ShapeError("backward needs a scalar loss");
    ensure_grad(loss);
    node(loss).grad[0] = T(1);
    for (int i = loss.i; i >= 0; --i) {
      Node& nd = nodes_[static_cast<size_t>(i)];
      if (nd.needs_grad && nd.back && nd.grad.size() > 0) nd.back();
    }
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    TensorT<T> val;
    TensorT<T> grad;  // allocated lazily on first accumulation
    std::function<void()> back;
    bool needs_grad = false;
  };

  Node& node(Ref r) { return nodes_[static_cast<size_t>(r.i)]; }

  void ensure_grad(Ref r) {
    Node& nd = node(r);
    if (nd.grad.size() == 0) nd.grad = TensorT<T>::zeros(nd.val.shape);
  }

  // Runs fn on the input's grad tensor iff that input participates in grads.
  template <typename F>
  void accum(Ref r, F&& fn) {
    Node& nd = node(r);
    if (!nd.needs_grad) return;
    ensure_grad(r);
    fn(nd.grad);
  }

  bool any_needs_grad(const std::vector<Ref>& xs) const {
    if (!recording_) return false;
    for (Ref x : xs)
      if (nodes_[static_cast<size_t>(x.i)].needs_grad) return true;
    return false;
  }

  Ref push(TensorT<T> v, bool needs_grad, std::function<void()> back) {
    if (!v.all_finite()) throw NumericError("non-finite value produced at node " +
                                            std::to_string(nodes_.size()));
    Node nd;
    nd.val = std::move(v);
    nd.needs_grad = recording_ && needs_grad;
    nd.back = std::move(back);
    nodes_.push_back(std::move(nd));
    return Ref{static_cast<int>(nodes_.size()) - 1};
  }

  // Helper for single-input ops: backfn(out_ref, input_ref).
  template <typename F>
  Ref unary(TensorT<T> out, Ref a, F&& backfn) {
    Ref r = push(std::move(out), node(a).needs_grad, nullptr);
    if (node(r).needs_grad)
      node(r).back = [this, r, a, fn = std::forward<F>(backfn)]() { fn(r, a); };
    return r;
  }

  template <typename F>
  Ref unary_or_binary(TensorT<T> out, Ref a, Ref b, F&& backfn) {
    Ref r = push(std::move(out), node(a).needs_grad || node(b).needs_grad, nullptr);
    if (node(r).needs_grad)
      node(r).back = [this, r, a, b, fn = std::forward<F>(backfn)]() { fn(r, a, b); };
    return r;
  }

  void require_same(Ref a, Ref b, const char* opname) {
    if (val(a).shape != val(b).shape)
      throw ShapeError(std::string(opname) + ": shape mismatch " + shape_str(val(a).shape) +
                       " vs " + shape_str(val(b).shape));
  }
  void require_rank(Ref a, int rank, const char* opname) {
    if (val(a).rank() != rank)
      throw ShapeError(std::string(opname) + ": expected rank " + std::to_string(rank) +
                       ", got " + shape_str(val(a).shape));
  }

  static int64_t trailing(const std::vector<int>& s) {
    int64_t n = 1;
    for (size_t k = 2; k < s.size(); ++k) n *= s[k];
    return n;
  }

  static T sigm(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  }

  static void stable_softmax(const T* z, T* p, int n) {
    T m = z[0];
    for (int j = 1; j < n; ++j) m = std::max(m, z[j]);
    T s = T(0);
    for (int j = 0; j < n; ++j) {
      p[j] = std::exp(z[j] - m);
      s += p[j];
    }
    const T inv = T(1) / s;
    for (int j = 0; j < n; ++j) p[j] *= inv;
  }

  static T logsumexp(const T* z, int n) {
    T m = z[0];
    for (int j = 1; j < n; ++j) m = std::max(m, z[j]);
    T s = T(0);
    for (int j = 0; j < n; ++j) s += std::exp(z[j] - m);
    return m + std::log(s);
  }

  static T safe_log(T q) { return std::log(std::max(q, T(1e-8))); }

  std::vector<Node> nodes_;
  bool recording_;
};

using Graph = GraphT<float>;

}  // namespace sokorl::diff
