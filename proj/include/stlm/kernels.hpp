#pragma once

#include <cstdint>

namespace stlm::kernels {

// Two backends with identical numerics: `serial` is the reference
// implementation, `par` adds OpenMP pragmas on independent outer loops.
// All parallel loops are gather-style (each output element written by
// exactly one iteration, accumulation order fixed), so results are
// bitwise identical across backends and thread counts. Full reductions
// to a scalar stay serial in both backends for the same reason.
enum class Backend { Serial, Parallel };

Backend backend();
void set_backend(Backend b);

struct Conv2dDims {
  int n = 1, cin = 1, h = 1, w = 1;
  int cout = 1, kh = 1, kw = 1;
  int stride = 1, pad = 0, dil = 1;
  int oh = 1, ow = 1;
};

#define STLM_DECLARE_KERNELS(NS)                                                               \
  namespace NS {                                                                               \
  template <class T> void ew_add(const T* a, const T* b, T* y, int64_t n);                     \
  template <class T> void ew_sub(const T* a, const T* b, T* y, int64_t n);                     \
  template <class T> void ew_mul(const T* a, const T* b, T* y, int64_t n);                     \
  template <class T> void ew_div(const T* a, const T* b, T* y, int64_t n);                     \
  template <class T> void ew_add_scalar(const T* a, T s, T* y, int64_t n);                     \
  template <class T> void ew_rsub_scalar(T s, const T* a, T* y, int64_t n);                    \
  template <class T> void ew_mul_scalar(const T* a, T s, T* y, int64_t n);                     \
  template <class T> void ew_rdiv_scalar(T s, const T* a, T* y, int64_t n);                    \
  template <class T> void relu_fwd(const T* x, T* y, int64_t n);                               \
  template <class T> void sigmoid_fwd(const T* x, T* y, int64_t n);                            \
  template <class T> void gelu_fwd(const T* x, T* y, int64_t n);                               \
  template <class T> void log_fwd(const T* x, T* y, int64_t n);                                \
  template <class T> void sqrt_fwd(const T* x, T* y, int64_t n);                               \
  template <class T> void abs_fwd(const T* x, T* y, int64_t n);                                \
  template <class T> void pow_scalar_fwd(const T* x, T c, T* y, int64_t n);                    \
  template <class T> void acc(T* dst, const T* src, int64_t n);                                \
  template <class T> void acc_neg(T* dst, const T* src, int64_t n);                            \
  template <class T> void acc_scaled(T* dst, const T* src, T alpha, int64_t n);                \
  template <class T> void acc_mul(T* dst, const T* a, const T* b, int64_t n);                  \
  template <class T> void acc_div(T* dst, const T* a, const T* b, int64_t n);                  \
  template <class T> void acc_div_neg_sq(T* dst, const T* g, const T* a, const T* b,           \
                                         int64_t n);                                           \
  template <class T> void acc_relu_bwd(T* dst, const T* gy, const T* x, int64_t n);            \
  template <class T> void acc_sigmoid_bwd(T* dst, const T* gy, const T* y, int64_t n);         \
  template <class T> void acc_gelu_bwd(T* dst, const T* gy, const T* x, int64_t n);            \
  template <class T> void acc_log_bwd(T* dst, const T* gy, const T* x, int64_t n);             \
  template <class T> void acc_sqrt_bwd(T* dst, const T* gy, const T* y, int64_t n);            \
  template <class T> void acc_abs_bwd(T* dst, const T* gy, const T* x, int64_t n);             \
  template <class T> void acc_pow_scalar_bwd(T* dst, const T* gy, const T* x, T c, int64_t n); \
  template <class T> void matmul_fwd(const T* a, const T* b, T* y, int n, int k, int m);       \
  template <class T> void matmul_bwd_a(T* ga, const T* gy, const T* b, int n, int k, int m);   \
  template <class T> void matmul_bwd_b(T* gb, const T* a, const T* gy, int n, int k, int m);   \
  template <class T> void bias_add_fwd(const T* x, const T* b, T* y, int rows, int cols);      \
  template <class T> void bias_add_bwd_b(T* gb, const T* gy, int rows, int cols);              \
  template <class T> void conv2d_fwd(const T* x, const T* w, const T* bias, T* y,              \
                                     const Conv2dDims& d);                                     \
  template <class T> void conv2d_bwd_x(T* gx, const T* gy, const T* w, const Conv2dDims& d);   \
  template <class T> void conv2d_bwd_w(T* gw, const T* x, const T* gy, const Conv2dDims& d);   \
  template <class T> void conv2d_bwd_bias(T* gb, const T* gy, const Conv2dDims& d);            \
  template <class T> void softmax_fwd(const T* x, T* y, int rows, int cols);                   \
  template <class T> void softmax_bwd(T* gx, const T* gy, const T* y, int rows, int cols);     \
  template <class T> void layernorm_fwd(const T* x, const T* gamma, const T* beta, T* y,       \
                                        T* mean, T* rstd, int rows, int cols);                 \
  template <class T> void layernorm_bwd(T* gx, T* ggamma, T* gbeta, const T* gy, const T* x,   \
                                        const T* gamma, const T* mean, const T* rstd,          \
                                        int rows, int cols);                                   \
  template <class T> void attention_fwd(const T* q, const T* k, const T* v, T* y, T* probs,    \
                                        int heads, int nq, int nk, int dim);                   \
  template <class T> void attention_bwd(T* gq, T* gk, T* gv, const T* gy, const T* q,          \
                                        const T* k, const T* v, const T* probs, int heads,     \
                                        int nq, int nk, int dim);                              \
  template <class T> void bilinear_fwd(const T* x, T* y, int c, int ih, int iw, int oh,        \
                                       int ow);                                                \
  template <class T> void bilinear_bwd(T* gx, const T* gy, int c, int ih, int iw, int oh,      \
                                       int ow);                                                \
  template <class T> void axis_sum_fwd(const T* x, T* y, int64_t outer, int64_t red,           \
                                       int64_t inner);                                         \
  template <class T> void axis_sum_bwd(T* gx, const T* gy, int64_t outer, int64_t red,         \
                                       int64_t inner, T scale);                                \
  template <class T> void l2_normalize_fwd(const T* x, T* y, T* norms, int64_t outer,          \
                                           int64_t red, int64_t inner, T eps);                 \
  template <class T> void l2_normalize_bwd(T* gx, const T* gy, const T* x, const T* norms,     \
                                           int64_t outer, int64_t red, int64_t inner, T eps);  \
  template <class T> void permute_copy(const T* x, T* y, const int64_t* out_dims,              \
                                       const int64_t* in_strides_for_out, int rank,            \
                                       int64_t total);                                         \
  template <class T> T reduce_sum(const T* x, int64_t n);                                      \
  template <class T> bool all_finite(const T* x, int64_t n);                                   \
  }

STLM_DECLARE_KERNELS(serial)
STLM_DECLARE_KERNELS(par)

#undef STLM_DECLARE_KERNELS

}  // namespace stlm::kernels
