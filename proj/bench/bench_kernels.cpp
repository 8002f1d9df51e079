// Times the serial reference kernels against the OpenMP backend and checks
// the outputs stay bitwise identical.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "stlm/kernels.hpp"
#include "stlm/rng.hpp"

using namespace stlm;
namespace k = stlm::kernels;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<float> randvec(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = float(rng.normal());
  return v;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

void row(const char* name, double serial_ms, double par_ms, bool equal) {
  std::printf("%-24s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", name,
              serial_ms, par_ms, serial_ms / par_ms, equal ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("kernel benchmark (serial reference vs OpenMP)\n\n");

  {
    const int n = 256, kk = 256, m = 256;
    auto a = randvec(size_t(n) * kk, 1), b = randvec(size_t(kk) * m, 2);
    std::vector<float> ys(size_t(n) * m), yp(size_t(n) * m);
    double ts = time_ms([&] { k::serial::matmul_fwd(a.data(), b.data(), ys.data(), n, kk, m); }, 5);
    double tp = time_ms([&] { k::par::matmul_fwd(a.data(), b.data(), yp.data(), n, kk, m); }, 5);
    row("matmul 256^3", ts, tp, bitwise_equal(ys, yp));
  }
  {
    k::Conv2dDims d;
    d.n = 1; d.cin = 64; d.h = 32; d.w = 32;
    d.cout = 64; d.kh = 3; d.kw = 3; d.pad = 1;
    d.oh = 32; d.ow = 32;
    auto x = randvec(size_t(d.cin) * d.h * d.w, 3);
    auto w = randvec(size_t(d.cout) * d.cin * 9, 4);
    auto bias = randvec(size_t(d.cout), 5);
    std::vector<float> ys(size_t(d.cout) * d.oh * d.ow), yp(ys.size());
    double ts = time_ms([&] { k::serial::conv2d_fwd(x.data(), w.data(), bias.data(), ys.data(), d); }, 5);
    double tp = time_ms([&] { k::par::conv2d_fwd(x.data(), w.data(), bias.data(), yp.data(), d); }, 5);
    row("conv2d 64x32x32 3x3", ts, tp, bitwise_equal(ys, yp));
  }
  {
    const int heads = 4, nq = 256, nk = 256, dim = 64;
    auto q = randvec(size_t(nq) * dim, 6), kk2 = randvec(size_t(nk) * dim, 7),
         v = randvec(size_t(nk) * dim, 8);
    std::vector<float> ys(size_t(nq) * dim), yp(ys.size());
    std::vector<float> ps(size_t(heads) * nq * nk), pp(ps.size());
    double ts = time_ms(
        [&] { k::serial::attention_fwd(q.data(), kk2.data(), v.data(), ys.data(), ps.data(), heads, nq, nk, dim); }, 5);
    double tp = time_ms(
        [&] { k::par::attention_fwd(q.data(), kk2.data(), v.data(), yp.data(), pp.data(), heads, nq, nk, dim); }, 5);
    row("attention 4h 256t d64", ts, tp, bitwise_equal(ys, yp));
  }
  {
    const int64_t n = 1 << 22;
    auto a = randvec(size_t(n), 9), b = randvec(size_t(n), 10);
    std::vector<float> ys(static_cast<size_t>(n)), yp(static_cast<size_t>(n));
    double ts = time_ms([&] { k::serial::ew_mul(a.data(), b.data(), ys.data(), n); }, 5);
    double tp = time_ms([&] { k::par::ew_mul(a.data(), b.data(), yp.data(), n); }, 5);
    row("ew_mul 4M", ts, tp, bitwise_equal(ys, yp));
  }
  {
    const int c = 8, ih = 64, iw = 64, oh = 512, ow = 512;
    auto x = randvec(size_t(c) * ih * iw, 11);
    std::vector<float> ys(size_t(c) * oh * ow), yp(ys.size());
    double ts = time_ms([&] { k::serial::bilinear_fwd(x.data(), ys.data(), c, ih, iw, oh, ow); }, 5);
    double tp = time_ms([&] { k::par::bilinear_fwd(x.data(), yp.data(), c, ih, iw, oh, ow); }, 5);
    row("bilinear 64->512 c8", ts, tp, bitwise_equal(ys, yp));
  }
  return 0;
}
