// Serial reference backend: no OpenMP pragmas, plain loops.

#define STLM_KNS serial
#define STLM_PFOR
#define STLM_PFOR2
#define STLM_PFOR_RED

#include "kernels_impl.inl"
