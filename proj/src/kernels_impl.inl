// Kernel loop bodies, included once per backend. STLM_KNS names the target
// namespace; STLM_PFOR / STLM_PFOR2 expand to OpenMP pragmas in the parallel
// build and to nothing in the serial reference build. The bodies themselves
// are shared so the two backends stay numerically identical.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "stlm/kernels.hpp"

namespace stlm::kernels::STLM_KNS {

namespace {

template <class T>
inline T dot(const T* a, const T* b, int64_t n) {
  T s = T(0);
  for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
inline T strided_dot(const T* a, int64_t sa, const T* b, int64_t sb, int64_t n) {
  T s = T(0);
  for (int64_t i = 0; i < n; ++i) s += a[i * sa] * b[i * sb];
  return s;
}

template <class T>
inline T gelu_val(T x) {
  return x * T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
}

template <class T>
inline T gelu_grad(T x) {
  const T kInvSqrt2 = T(0.7071067811865475244);
  const T kInvSqrt2Pi = T(0.3989422804014326779);
  T cdf = T(0.5) * (T(1) + std::erf(x * kInvSqrt2));
  T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * x * x);
  return cdf + x * pdf;
}

// valid output range [lo, hi) with 0 <= o*stride + off < in_extent
inline void conv_out_range(int off, int stride, int in_extent, int out_extent, int& lo,
                           int& hi) {
  lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  int h = in_extent - 1 - off;
  hi = h < 0 ? 0 : h / stride + 1;
  lo = lo < out_extent ? lo : out_extent;
  hi = hi < out_extent ? hi : out_extent;
  if (hi < lo) hi = lo;
}

}  // namespace

template <class T>
void ew_add(const T* a, const T* b, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T>
void ew_sub(const T* a, const T* b, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <class T>
void ew_mul(const T* a, const T* b, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
void ew_div(const T* a, const T* b, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] / b[i];
}

template <class T>
void ew_add_scalar(const T* a, T s, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] + s;
}

template <class T>
void ew_rsub_scalar(T s, const T* a, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = s - a[i];
}

template <class T>
void ew_mul_scalar(const T* a, T s, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = a[i] * s;
}

template <class T>
void ew_rdiv_scalar(T s, const T* a, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = s / a[i];
}

template <class T>
void relu_fwd(const T* x, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void sigmoid_fwd(const T* x, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
}

template <class T>
void gelu_fwd(const T* x, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = gelu_val(x[i]);
}

template <class T>
void log_fwd(const T* x, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = std::log(x[i]);
}

template <class T>
void sqrt_fwd(const T* x, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = std::sqrt(x[i]);
}

template <class T>
void abs_fwd(const T* x, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = std::abs(x[i]);
}

template <class T>
void pow_scalar_fwd(const T* x, T c, T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) y[i] = std::pow(x[i], c);
}

template <class T>
void acc(T* dst, const T* src, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

template <class T>
void acc_neg(T* dst, const T* src, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] -= src[i];
}

template <class T>
void acc_scaled(T* dst, const T* src, T alpha, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] += alpha * src[i];
}

template <class T>
void acc_mul(T* dst, const T* a, const T* b, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}

template <class T>
void acc_div(T* dst, const T* a, const T* b, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] += a[i] / b[i];
}

template <class T>
void acc_div_neg_sq(T* dst, const T* g, const T* a, const T* b, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] -= g[i] * a[i] / (b[i] * b[i]);
}

template <class T>
void acc_relu_bwd(T* dst, const T* gy, const T* x, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] += x[i] > T(0) ? gy[i] : T(0);
}

template <class T>
void acc_sigmoid_bwd(T* dst, const T* gy, const T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] += gy[i] * y[i] * (T(1) - y[i]);
}

template <class T>
void acc_gelu_bwd(T* dst, const T* gy, const T* x, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] += gy[i] * gelu_grad(x[i]);
}

template <class T>
void acc_log_bwd(T* dst, const T* gy, const T* x, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] += gy[i] / x[i];
}

template <class T>
void acc_sqrt_bwd(T* dst, const T* gy, const T* y, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i) dst[i] += y[i] > T(0) ? gy[i] * T(0.5) / y[i] : T(0);
}

template <class T>
void acc_abs_bwd(T* dst, const T* gy, const T* x, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i)
    dst[i] += x[i] > T(0) ? gy[i] : (x[i] < T(0) ? -gy[i] : T(0));
}

template <class T>
void acc_pow_scalar_bwd(T* dst, const T* gy, const T* x, T c, int64_t n) {
  STLM_PFOR
  for (int64_t i = 0; i < n; ++i)
    dst[i] += x[i] > T(0) ? gy[i] * c * std::pow(x[i], c - T(1)) : T(0);
}

template <class T>
void matmul_fwd(const T* a, const T* b, T* y, int n, int k, int m) {
  STLM_PFOR
  for (int i = 0; i < n; ++i) {
    T* yr = y + int64_t(i) * m;
    for (int j = 0; j < m; ++j) yr[j] = T(0);
    for (int p = 0; p < k; ++p) {
      T av = a[int64_t(i) * k + p];
      const T* br = b + int64_t(p) * m;
      for (int j = 0; j < m; ++j) yr[j] += av * br[j];
    }
  }
}

template <class T>
void matmul_bwd_a(T* ga, const T* gy, const T* b, int n, int k, int m) {
  // ga += gy * b^T
  STLM_PFOR
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p)
      ga[int64_t(i) * k + p] += dot(gy + int64_t(i) * m, b + int64_t(p) * m, m);
}

template <class T>
void matmul_bwd_b(T* gb, const T* a, const T* gy, int n, int k, int m) {
  // gb += a^T * gy
  STLM_PFOR
  for (int p = 0; p < k; ++p) {
    T* gbr = gb + int64_t(p) * m;
    for (int i = 0; i < n; ++i) {
      T av = a[int64_t(i) * k + p];
      const T* gyr = gy + int64_t(i) * m;
      for (int j = 0; j < m; ++j) gbr[j] += av * gyr[j];
    }
  }
}

template <class T>
void bias_add_fwd(const T* x, const T* b, T* y, int rows, int cols) {
  STLM_PFOR
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) y[int64_t(r) * cols + c] = x[int64_t(r) * cols + c] + b[c];
}

template <class T>
void bias_add_bwd_b(T* gb, const T* gy, int rows, int cols) {
  STLM_PFOR
  for (int c = 0; c < cols; ++c) {
    T s = T(0);
    for (int r = 0; r < rows; ++r) s += gy[int64_t(r) * cols + c];
    gb[c] += s;
  }
}

namespace {

// columns buffer: row p = (ci, kh, kw), column j = (oh, ow)
template <class T>
void im2col(const T* x, T* cols, const Conv2dDims& d) {
  const int64_t xplane = int64_t(d.h) * d.w, yplane = int64_t(d.oh) * d.ow;
  for (int ci = 0; ci < d.cin; ++ci) {
    const T* xp = x + ci * xplane;
    for (int kh = 0; kh < d.kh; ++kh) {
      int off_h = kh * d.dil - d.pad, lo_h, hi_h;
      conv_out_range(off_h, d.stride, d.h, d.oh, lo_h, hi_h);
      for (int kw = 0; kw < d.kw; ++kw) {
        int off_w = kw * d.dil - d.pad, lo_w, hi_w;
        conv_out_range(off_w, d.stride, d.w, d.ow, lo_w, hi_w);
        T* crow = cols + ((int64_t(ci) * d.kh + kh) * d.kw + kw) * yplane;
        for (int64_t i = 0; i < yplane; ++i) crow[i] = T(0);
        for (int oh = lo_h; oh < hi_h; ++oh) {
          const T* xrow = xp + int64_t(oh * d.stride + off_h) * d.w + off_w;
          T* cr = crow + int64_t(oh) * d.ow;
          if (d.stride == 1) {
            for (int ow = lo_w; ow < hi_w; ++ow) cr[ow] = xrow[ow];
          } else {
            for (int ow = lo_w; ow < hi_w; ++ow) cr[ow] = xrow[ow * d.stride];
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
void conv2d_fwd(const T* x, const T* w, const T* bias, T* y, const Conv2dDims& d) {
  const int64_t xplane = int64_t(d.h) * d.w, yplane = int64_t(d.oh) * d.ow;
  const int64_t kdim = int64_t(d.cin) * d.kh * d.kw;
  for (int n = 0; n < d.n; ++n) {
    std::vector<T> cols(size_t(kdim * yplane));
    im2col(x + int64_t(n) * d.cin * xplane, cols.data(), d);
    T* yb = y + int64_t(n) * d.cout * yplane;
    matmul_fwd(w, cols.data(), yb, d.cout, int(kdim), int(yplane));
    if (bias) {
      STLM_PFOR
      for (int co = 0; co < d.cout; ++co) {
        T* yp = yb + int64_t(co) * yplane;
        for (int64_t i = 0; i < yplane; ++i) yp[i] += bias[co];
      }
    }
  }
}

template <class T>
void conv2d_bwd_x(T* gx, const T* gy, const T* w, const Conv2dDims& d) {
  const int64_t xplane = int64_t(d.h) * d.w, yplane = int64_t(d.oh) * d.ow;
  const int64_t kdim = int64_t(d.cin) * d.kh * d.kw;
  for (int n = 0; n < d.n; ++n) {
    // gcols = w^T * gy, then col2im accumulates into the input planes
    std::vector<T> gcols(size_t(kdim * yplane), T(0));
    matmul_bwd_b(gcols.data(), w, gy + int64_t(n) * d.cout * yplane, d.cout, int(kdim),
                 int(yplane));
    T* gxb = gx + int64_t(n) * d.cin * xplane;
    STLM_PFOR
    for (int ci = 0; ci < d.cin; ++ci) {
      T* gxp = gxb + int64_t(ci) * xplane;
      for (int kh = 0; kh < d.kh; ++kh) {
        int off_h = kh * d.dil - d.pad, lo_h, hi_h;
        conv_out_range(off_h, d.stride, d.h, d.oh, lo_h, hi_h);
        for (int kw = 0; kw < d.kw; ++kw) {
          int off_w = kw * d.dil - d.pad, lo_w, hi_w;
          conv_out_range(off_w, d.stride, d.w, d.ow, lo_w, hi_w);
          const T* crow = gcols.data() + ((int64_t(ci) * d.kh + kh) * d.kw + kw) * yplane;
          for (int oh = lo_h; oh < hi_h; ++oh) {
            T* gxrow = gxp + int64_t(oh * d.stride + off_h) * d.w + off_w;
            const T* cr = crow + int64_t(oh) * d.ow;
            if (d.stride == 1) {
              for (int ow = lo_w; ow < hi_w; ++ow) gxrow[ow] += cr[ow];
            } else {
              for (int ow = lo_w; ow < hi_w; ++ow) gxrow[ow * d.stride] += cr[ow];
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv2d_bwd_w(T* gw, const T* x, const T* gy, const Conv2dDims& d) {
  const int64_t xplane = int64_t(d.h) * d.w, yplane = int64_t(d.oh) * d.ow;
  const int64_t kdim = int64_t(d.cin) * d.kh * d.kw;
  for (int n = 0; n < d.n; ++n) {
    std::vector<T> cols(size_t(kdim * yplane));
    im2col(x + int64_t(n) * d.cin * xplane, cols.data(), d);
    // gw += gy * cols^T
    matmul_bwd_a(gw, gy + int64_t(n) * d.cout * yplane, cols.data(), d.cout, int(kdim),
                 int(yplane));
  }
}

template <class T>
void conv2d_bwd_bias(T* gb, const T* gy, const Conv2dDims& d) {
  const int64_t yplane = int64_t(d.oh) * d.ow;
  STLM_PFOR
  for (int co = 0; co < d.cout; ++co) {
    T s = T(0);
    for (int n = 0; n < d.n; ++n) {
      const T* gyp = gy + (int64_t(n) * d.cout + co) * yplane;
      for (int64_t i = 0; i < yplane; ++i) s += gyp[i];
    }
    gb[co] += s;
  }
}

template <class T>
void softmax_fwd(const T* x, T* y, int rows, int cols) {
  STLM_PFOR
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + int64_t(r) * cols;
    T* yr = y + int64_t(r) * cols;
    T mx = xr[0];
    for (int c = 1; c < cols; ++c) mx = xr[c] > mx ? xr[c] : mx;
    T z = T(0);
    for (int c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      z += yr[c];
    }
    T inv = T(1) / z;
    for (int c = 0; c < cols; ++c) yr[c] *= inv;
  }
}

template <class T>
void softmax_bwd(T* gx, const T* gy, const T* y, int rows, int cols) {
  STLM_PFOR
  for (int r = 0; r < rows; ++r) {
    const T* gyr = gy + int64_t(r) * cols;
    const T* yr = y + int64_t(r) * cols;
    T* gxr = gx + int64_t(r) * cols;
    T s = dot(gyr, yr, cols);
    for (int c = 0; c < cols; ++c) gxr[c] += yr[c] * (gyr[c] - s);
  }
}

template <class T>
void layernorm_fwd(const T* x, const T* gamma, const T* beta, T* y, T* mean, T* rstd,
                   int rows, int cols) {
  const T eps = T(1e-5);
  STLM_PFOR
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + int64_t(r) * cols;
    T* yr = y + int64_t(r) * cols;
    T mu = T(0);
    for (int c = 0; c < cols; ++c) mu += xr[c];
    mu /= T(cols);
    T var = T(0);
    for (int c = 0; c < cols; ++c) {
      T dlt = xr[c] - mu;
      var += dlt * dlt;
    }
    var /= T(cols);
    T rs = T(1) / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int c = 0; c < cols; ++c) yr[c] = (xr[c] - mu) * rs * gamma[c] + beta[c];
  }
}

template <class T>
void layernorm_bwd(T* gx, T* ggamma, T* gbeta, const T* gy, const T* x, const T* gamma,
                   const T* mean, const T* rstd, int rows, int cols) {
  STLM_PFOR
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + int64_t(r) * cols;
    const T* gyr = gy + int64_t(r) * cols;
    T* gxr = gx + int64_t(r) * cols;
    T mu = mean[r], rs = rstd[r];
    T s1 = T(0), s2 = T(0);
    for (int c = 0; c < cols; ++c) {
      T xhat = (xr[c] - mu) * rs;
      T gh = gyr[c] * gamma[c];
      s1 += gh;
      s2 += gh * xhat;
    }
    s1 /= T(cols);
    s2 /= T(cols);
    for (int c = 0; c < cols; ++c) {
      T xhat = (xr[c] - mu) * rs;
      T gh = gyr[c] * gamma[c];
      gxr[c] += rs * (gh - s1 - xhat * s2);
    }
  }
  STLM_PFOR
  for (int c = 0; c < cols; ++c) {
    T sg = T(0), sb = T(0);
    for (int r = 0; r < rows; ++r) {
      T xhat = (x[int64_t(r) * cols + c] - mean[r]) * rstd[r];
      sg += gy[int64_t(r) * cols + c] * xhat;
      sb += gy[int64_t(r) * cols + c];
    }
    ggamma[c] += sg;
    gbeta[c] += sb;
  }
}

template <class T>
void attention_fwd(const T* q, const T* k, const T* v, T* y, T* probs, int heads, int nq,
                   int nk, int dim) {
  const int dh = dim / heads;
  const T alpha = T(1) / std::sqrt(T(dh));
  STLM_PFOR2
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < nq; ++i) {
      const T* qr = q + int64_t(i) * dim + h * dh;
      T* pr = probs + (int64_t(h) * nq + i) * nk;
      T mx = -std::numeric_limits<T>::infinity();
      for (int j = 0; j < nk; ++j) {
        pr[j] = alpha * strided_dot(qr, 1, k + int64_t(j) * dim + h * dh, 1, dh);
        mx = pr[j] > mx ? pr[j] : mx;
      }
      T z = T(0);
      for (int j = 0; j < nk; ++j) {
        pr[j] = std::exp(pr[j] - mx);
        z += pr[j];
      }
      T inv = T(1) / z;
      for (int j = 0; j < nk; ++j) pr[j] *= inv;
      T* yr = y + int64_t(i) * dim + h * dh;
      for (int t = 0; t < dh; ++t) yr[t] = strided_dot(pr, 1, v + h * dh + t, dim, nk);
    }
}

template <class T>
void attention_bwd(T* gq, T* gk, T* gv, const T* gy, const T* q, const T* k, const T* v,
                   const T* probs, int heads, int nq, int nk, int dim) {
  const int dh = dim / heads;
  const T alpha = T(1) / std::sqrt(T(dh));
  // gq rows are independent per (h, i)
  STLM_PFOR2
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < nq; ++i) {
      const T* pr = probs + (int64_t(h) * nq + i) * nk;
      const T* gyr = gy + int64_t(i) * dim + h * dh;
      // gs_j = p_j * (gp_j - sum_t gp_t p_t), gp_j = <gy_i, v_j>
      T dotsum = T(0);
      for (int j = 0; j < nk; ++j)
        dotsum += pr[j] * strided_dot(gyr, 1, v + int64_t(j) * dim + h * dh, 1, dh);
      T* gqr = gq + int64_t(i) * dim + h * dh;
      for (int j = 0; j < nk; ++j) {
        T gp = strided_dot(gyr, 1, v + int64_t(j) * dim + h * dh, 1, dh);
        T gs = pr[j] * (gp - dotsum) * alpha;
        const T* kr = k + int64_t(j) * dim + h * dh;
        for (int t = 0; t < dh; ++t) gqr[t] += gs * kr[t];
      }
    }
  // gk, gv rows are independent per (h, j)
  STLM_PFOR2
  for (int h = 0; h < heads; ++h)
    for (int j = 0; j < nk; ++j) {
      T* gkr = gk + int64_t(j) * dim + h * dh;
      T* gvr = gv + int64_t(j) * dim + h * dh;
      for (int i = 0; i < nq; ++i) {
        const T* pr = probs + (int64_t(h) * nq + i) * nk;
        const T* gyr = gy + int64_t(i) * dim + h * dh;
        T gp = strided_dot(gyr, 1, v + int64_t(j) * dim + h * dh, 1, dh);
        T dotsum = T(0);
        for (int jj = 0; jj < nk; ++jj)
          dotsum += pr[jj] * strided_dot(gyr, 1, v + int64_t(jj) * dim + h * dh, 1, dh);
        T gs = pr[j] * (gp - dotsum) * alpha;
        const T* qr = q + int64_t(i) * dim + h * dh;
        for (int t = 0; t < dh; ++t) {
          gkr[t] += gs * qr[t];
          gvr[t] += pr[j] * gyr[t];
        }
      }
    }
}

template <class T>
void bilinear_fwd(const T* x, T* y, int c, int ih, int iw, int oh, int ow) {
  const T sh = T(ih) / T(oh), sw = T(iw) / T(ow);
  STLM_PFOR2
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < oh; ++r) {
      const T* xp = x + int64_t(ch) * ih * iw;
      T* yp = y + int64_t(ch) * oh * ow + int64_t(r) * ow;
      T fy = (T(r) + T(0.5)) * sh - T(0.5);
      fy = fy < T(0) ? T(0) : fy;
      int y0 = int(fy);
      y0 = y0 > ih - 1 ? ih - 1 : y0;
      int y1 = y0 + 1 > ih - 1 ? ih - 1 : y0 + 1;
      T wy = fy - T(y0);
      for (int q = 0; q < ow; ++q) {
        T fx = (T(q) + T(0.5)) * sw - T(0.5);
        fx = fx < T(0) ? T(0) : fx;
        int x0 = int(fx);
        x0 = x0 > iw - 1 ? iw - 1 : x0;
        int x1 = x0 + 1 > iw - 1 ? iw - 1 : x0 + 1;
        T wx = fx - T(x0);
        T top = xp[int64_t(y0) * iw + x0] * (T(1) - wx) + xp[int64_t(y0) * iw + x1] * wx;
        T bot = xp[int64_t(y1) * iw + x0] * (T(1) - wx) + xp[int64_t(y1) * iw + x1] * wx;
        yp[q] = top * (T(1) - wy) + bot * wy;
      }
    }
}

template <class T>
void bilinear_bwd(T* gx, const T* gy, int c, int ih, int iw, int oh, int ow) {
  const T sh = T(ih) / T(oh), sw = T(iw) / T(ow);
  // scatter within a channel plane; planes are independent
  STLM_PFOR
  for (int ch = 0; ch < c; ++ch) {
    T* gxp = gx + int64_t(ch) * ih * iw;
    const T* gyp = gy + int64_t(ch) * oh * ow;
    for (int r = 0; r < oh; ++r) {
      T fy = (T(r) + T(0.5)) * sh - T(0.5);
      fy = fy < T(0) ? T(0) : fy;
      int y0 = int(fy);
      y0 = y0 > ih - 1 ? ih - 1 : y0;
      int y1 = y0 + 1 > ih - 1 ? ih - 1 : y0 + 1;
      T wy = fy - T(y0);
      for (int q = 0; q < ow; ++q) {
        T fx = (T(q) + T(0.5)) * sw - T(0.5);
        fx = fx < T(0) ? T(0) : fx;
        int x0 = int(fx);
        x0 = x0 > iw - 1 ? iw - 1 : x0;
        int x1 = x0 + 1 > iw - 1 ? iw - 1 : x0 + 1;
        T wx = fx - T(x0);
        T g = gyp[int64_t(r) * ow + q];
        gxp[int64_t(y0) * iw + x0] += g * (T(1) - wy) * (T(1) - wx);
        gxp[int64_t(y0) * iw + x1] += g * (T(1) - wy) * wx;
        gxp[int64_t(y1) * iw + x0] += g * wy * (T(1) - wx);
        gxp[int64_t(y1) * iw + x1] += g * wy * wx;
      }
    }
  }
}

template <class T>
void axis_sum_fwd(const T* x, T* y, int64_t outer, int64_t red, int64_t inner) {
  STLM_PFOR
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T s = T(0);
      for (int64_t r = 0; r < red; ++r) s += x[(o * red + r) * inner + i];
      y[o * inner + i] = s;
    }
}

template <class T>
void axis_sum_bwd(T* gx, const T* gy, int64_t outer, int64_t red, int64_t inner, T scale) {
  STLM_PFOR
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t r = 0; r < red; ++r)
      for (int64_t i = 0; i < inner; ++i)
        gx[(o * red + r) * inner + i] += scale * gy[o * inner + i];
}

template <class T>
void l2_normalize_fwd(const T* x, T* y, T* norms, int64_t outer, int64_t red, int64_t inner,
                      T eps) {
  STLM_PFOR
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T ss = T(0);
      for (int64_t r = 0; r < red; ++r) {
        T v = x[(o * red + r) * inner + i];
        ss += v * v;
      }
      T nrm = std::sqrt(ss);
      norms[o * inner + i] = nrm;
      T inv = T(1) / (nrm + eps);
      for (int64_t r = 0; r < red; ++r)
        y[(o * red + r) * inner + i] = x[(o * red + r) * inner + i] * inv;
    }
}

template <class T>
void l2_normalize_bwd(T* gx, const T* gy, const T* x, const T* norms, int64_t outer,
                      int64_t red, int64_t inner, T eps) {
  STLM_PFOR
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T nrm = norms[o * inner + i];
      T d = nrm + eps;
      T gdotx = T(0);
      for (int64_t r = 0; r < red; ++r)
        gdotx += gy[(o * red + r) * inner + i] * x[(o * red + r) * inner + i];
      T coef = nrm > T(1e-30) ? gdotx / (d * d * nrm) : T(0);
      for (int64_t r = 0; r < red; ++r) {
        int64_t idx = (o * red + r) * inner + i;
        gx[idx] += gy[idx] / d - coef * x[idx];
      }
    }
}

template <class T>
void permute_copy(const T* x, T* y, const int64_t* out_dims, const int64_t* in_strides_for_out,
                  int rank, int64_t total) {
  STLM_PFOR
  for (int64_t o = 0; o < total; ++o) {
    int64_t rem = o, src = 0;
    for (int a = rank - 1; a >= 0; --a) {
      int64_t c = rem % out_dims[a];
      rem /= out_dims[a];
      src += c * in_strides_for_out[a];
    }
    y[o] = x[src];
  }
}

// Full reductions stay serial in both backends so that results are
// independent of thread count.
template <class T>
T reduce_sum(const T* x, int64_t n) {
  T s = T(0);
  for (int64_t i = 0; i < n; ++i) s += x[i];
  return s;
}

template <class T>
bool all_finite(const T* x, int64_t n) {
  int bad = 0;
  STLM_PFOR_RED
  for (int64_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) bad += 1;
  return bad == 0;
}

#define STLM_INSTANTIATE(T)                                                                   \
  template void ew_add<T>(const T*, const T*, T*, int64_t);                                   \
  template void ew_sub<T>(const T*, const T*, T*, int64_t);                                   \
  template void ew_mul<T>(const T*, const T*, T*, int64_t);                                   \
  template void ew_div<T>(const T*, const T*, T*, int64_t);                                   \
  template void ew_add_scalar<T>(const T*, T, T*, int64_t);                                   \
  template void ew_rsub_scalar<T>(T, const T*, T*, int64_t);                                  \
  template void ew_mul_scalar<T>(const T*, T, T*, int64_t);                                   \
  template void ew_rdiv_scalar<T>(T, const T*, T*, int64_t);                                  \
  template void relu_fwd<T>(const T*, T*, int64_t);                                          \
  template void sigmoid_fwd<T>(const T*, T*, int64_t);                                       \
  template void gelu_fwd<T>(const T*, T*, int64_t);                                          \
  template void log_fwd<T>(const T*, T*, int64_t);                                           \
  template void sqrt_fwd<T>(const T*, T*, int64_t);                                          \
  template void abs_fwd<T>(const T*, T*, int64_t);                                           \
  template void pow_scalar_fwd<T>(const T*, T, T*, int64_t);                                 \
  template void acc<T>(T*, const T*, int64_t);                                               \
  template void acc_neg<T>(T*, const T*, int64_t);                                           \
  template void acc_scaled<T>(T*, const T*, T, int64_t);                                     \
  template void acc_mul<T>(T*, const T*, const T*, int64_t);                                 \
  template void acc_div<T>(T*, const T*, const T*, int64_t);                                 \
  template void acc_div_neg_sq<T>(T*, const T*, const T*, const T*, int64_t);                \
  template void acc_relu_bwd<T>(T*, const T*, const T*, int64_t);                            \
  template void acc_sigmoid_bwd<T>(T*, const T*, const T*, int64_t);                         \
  template void acc_gelu_bwd<T>(T*, const T*, const T*, int64_t);                            \
  template void acc_log_bwd<T>(T*, const T*, const T*, int64_t);                             \
  template void acc_sqrt_bwd<T>(T*, const T*, const T*, int64_t);                            \
  template void acc_abs_bwd<T>(T*, const T*, const T*, int64_t);                             \
  template void acc_pow_scalar_bwd<T>(T*, const T*, const T*, T, int64_t);                   \
  template void matmul_fwd<T>(const T*, const T*, T*, int, int, int);                        \
  template void matmul_bwd_a<T>(T*, const T*, const T*, int, int, int);                      \
  template void matmul_bwd_b<T>(T*, const T*, const T*, int, int, int);                      \
  template void bias_add_fwd<T>(const T*, const T*, T*, int, int);                           \
  template void bias_add_bwd_b<T>(T*, const T*, int, int);                                   \
  template void conv2d_fwd<T>(const T*, const T*, const T*, T*, const Conv2dDims&);          \
  template void conv2d_bwd_x<T>(T*, const T*, const T*, const Conv2dDims&);                  \
  template void conv2d_bwd_w<T>(T*, const T*, const T*, const Conv2dDims&);                  \
  template void conv2d_bwd_bias<T>(T*, const T*, const Conv2dDims&);                         \
  template void softmax_fwd<T>(const T*, T*, int, int);                                      \
  template void softmax_bwd<T>(T*, const T*, const T*, int, int);                            \
  template void layernorm_fwd<T>(const T*, const T*, const T*, T*, T*, T*, int, int);        \
  template void layernorm_bwd<T>(T*, T*, T*, const T*, const T*, const T*, const T*,         \
                                 const T*, int, int);                                         \
  template void attention_fwd<T>(const T*, const T*, const T*, T*, T*, int, int, int, int);  \
  template void attention_bwd<T>(T*, T*, T*, const T*, const T*, const T*, const T*,         \
                                 const T*, int, int, int, int);                               \
  template void bilinear_fwd<T>(const T*, T*, int, int, int, int, int);                      \
  template void bilinear_bwd<T>(T*, const T*, int, int, int, int, int);                      \
  template void axis_sum_fwd<T>(const T*, T*, int64_t, int64_t, int64_t);                    \
  template void axis_sum_bwd<T>(T*, const T*, int64_t, int64_t, int64_t, T);                 \
  template void l2_normalize_fwd<T>(const T*, T*, T*, int64_t, int64_t, int64_t, T);         \
  template void l2_normalize_bwd<T>(T*, const T*, const T*, const T*, int64_t, int64_t,      \
                                    int64_t, T);                                              \
  template void permute_copy<T>(const T*, T*, const int64_t*, const int64_t*, int, int64_t); \
  template T reduce_sum<T>(const T*, int64_t);                                                \
  template bool all_finite<T>(const T*, int64_t);

STLM_INSTANTIATE(float)
STLM_INSTANTIATE(double)

#undef STLM_INSTANTIATE

}  // namespace stlm::kernels::STLM_KNS
