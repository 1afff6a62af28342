#pragma once

#include <cstdint>

// Dense single-threaded kernels. Row-major everywhere; loop orders chosen so the
// innermost loop walks contiguous memory and auto-vectorizes.

namespace sokorl::diff {

// C[m,n] += A[m,k] * B[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<int64_t>(i) * k;
    T* crow = c + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<int64_t>(i) * k;
    T* crow = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<int64_t>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const T* arow = a + static_cast<int64_t>(p) * m;
    const T* brow = b + static_cast<int64_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Unfold one image [C,H,W] into columns [C*kh*kw, oh*ow] for stride-1 conv with
// symmetric zero padding.
template <typename T>
void im2col_2d(const T* img, int c, int h, int w, int kh, int kw, int pad, T* col) {
  const int oh = h + 2 * pad - kh + 1;
  const int ow = w + 2 * pad - kw + 1;
  int64_t r = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj, ++r) {
        T* crow = col + r * (static_cast<int64_t>(oh) * ow);
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi + ki - pad;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj + kj - pad;
            crow[oi * ow + oj] = (ii >= 0 && ii < h && jj >= 0 && jj < w)
                                     ? img[(static_cast<int64_t>(ch) * h + ii) * w + jj]
                                     : T(0);
          }
        }
      }
}

// Scatter-add of column gradients back into the image gradient.
template <typename T>
void col2im_2d(const T* col, int c, int h, int w, int kh, int kw, int pad, T* img) {
  const int oh = h + 2 * pad - kh + 1;
  const int ow = w + 2 * pad - kw + 1;
  int64_t r = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj, ++r) {
        const T* crow = col + r * (static_cast<int64_t>(oh) * ow);
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi + ki - pad;
          if (ii < 0 || ii >= h) continue;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj + kj - pad;
            if (jj < 0 || jj >= w) continue;
            img[(static_cast<int64_t>(ch) * h + ii) * w + jj] += crow[oi * ow + oj];
          }
        }
      }
}

// 1D variants with configurable stride: [C,L] -> [C*kw, ol]
template <typename T>
void im2col_1d(const T* sig, int c, int l, int kw, int pad, int stride, T* col) {
  const int ol = (l + 2 * pad - kw) / stride + 1;
  int64_t r = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int kj = 0; kj < kw; ++kj, ++r) {
      T* crow = col + r * ol;
      for (int oj = 0; oj < ol; ++oj) {
        const int jj = oj * stride + kj - pad;
        crow[oj] = (jj >= 0 && jj < l) ? sig[static_cast<int64_t>(ch) * l + jj] : T(0);
      }
    }
}

template <typename T>
void col2im_1d(const T* col, int c, int l, int kw, int pad, int stride, T* sig) {
  const int ol = (l + 2 * pad - kw) / stride + 1;
  int64_t r = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int kj = 0; kj < kw; ++kj, ++r) {
      const T* crow = col + r * ol;
      for (int oj = 0; oj < ol; ++oj) {
        const int jj = oj * stride + kj - pad;
        if (jj >= 0 && jj < l) sig[static_cast<int64_t>(ch) * l + jj] += crow[oj];
      }
    }
}

}  // namespace sokorl::diff
