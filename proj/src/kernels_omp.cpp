// OpenMP backend: same loop bodies as the serial reference with pragmas on
// the independent outer loops.

#define STLM_KNS par
#define STLM_PFOR _Pragma("omp parallel for schedule(static)")
#define STLM_PFOR2 _Pragma("omp parallel for schedule(static) collapse(2)")
#define STLM_PFOR_RED _Pragma("omp parallel for schedule(static) reduction(+ : bad)")

#include "kernels_impl.inl"
