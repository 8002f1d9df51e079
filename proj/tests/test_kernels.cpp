// The serial backend is the reference; the OpenMP backend must match it
// bitwise on every kernel.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "stlm/kernels.hpp"
#include "stlm/rng.hpp"

using namespace stlm;
namespace k = stlm::kernels;

namespace {

std::vector<float> rand_vec(size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = float(rng.normal());
  return v;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

}  // namespace

TEST_CASE("elementwise kernels agree across backends") {
  Rng rng(1);
  for (int it = 0; it < 10; ++it) {
    size_t n = 1 + size_t(rng.uniform_int(0, 999));
    auto a = rand_vec(n, rng), b = rand_vec(n, rng);
    for (auto& x : b) x += x == 0.f ? 1.f : 0.f;
    std::vector<float> ys(n), yp(n);
    k::serial::ew_add(a.data(), b.data(), ys.data(), int64_t(n));
    k::par::ew_add(a.data(), b.data(), yp.data(), int64_t(n));
    CHECK(same_bits(ys, yp));
    k::serial::ew_div(a.data(), b.data(), ys.data(), int64_t(n));
    k::par::ew_div(a.data(), b.data(), yp.data(), int64_t(n));
    CHECK(same_bits(ys, yp));
    k::serial::gelu_fwd(a.data(), ys.data(), int64_t(n));
    k::par::gelu_fwd(a.data(), yp.data(), int64_t(n));
    CHECK(same_bits(ys, yp));
    k::serial::sigmoid_fwd(a.data(), ys.data(), int64_t(n));
    k::par::sigmoid_fwd(a.data(), yp.data(), int64_t(n));
    CHECK(same_bits(ys, yp));
  }
}

TEST_CASE("matmul fwd/bwd agree across backends") {
  Rng rng(2);
  for (int it = 0; it < 10; ++it) {
    int n = 1 + int(rng.uniform_int(0, 20)), kk = 1 + int(rng.uniform_int(0, 20)),
        m = 1 + int(rng.uniform_int(0, 20));
    auto a = rand_vec(size_t(n) * kk, rng), b = rand_vec(size_t(kk) * m, rng),
         gy = rand_vec(size_t(n) * m, rng);
    std::vector<float> ys(size_t(n) * m), yp(ys.size());
    k::serial::matmul_fwd(a.data(), b.data(), ys.data(), n, kk, m);
    k::par::matmul_fwd(a.data(), b.data(), yp.data(), n, kk, m);
    CHECK(same_bits(ys, yp));

    std::vector<float> gas(size_t(n) * kk, 0.f), gap = gas;
    k::serial::matmul_bwd_a(gas.data(), gy.data(), b.data(), n, kk, m);
    k::par::matmul_bwd_a(gap.data(), gy.data(), b.data(), n, kk, m);
    CHECK(same_bits(gas, gap));

    std::vector<float> gbs(size_t(kk) * m, 0.f), gbp = gbs;
    k::serial::matmul_bwd_b(gbs.data(), a.data(), gy.data(), n, kk, m);
    k::par::matmul_bwd_b(gbp.data(), a.data(), gy.data(), n, kk, m);
    CHECK(same_bits(gbs, gbp));
  }
}

TEST_CASE("conv2d fwd/bwd agree across backends") {
  Rng rng(3);
  for (int it = 0; it < 10; ++it) {
    k::Conv2dDims d;
    d.n = 1 + int(rng.uniform_int(0, 1));
    d.cin = 1 + int(rng.uniform_int(0, 3));
    d.cout = 1 + int(rng.uniform_int(0, 3));
    d.kh = 1 + int(rng.uniform_int(0, 2));
    d.kw = 1 + int(rng.uniform_int(0, 2));
    d.stride = 1 + int(rng.uniform_int(0, 1));
    d.pad = int(rng.uniform_int(0, 2));
    d.dil = 1 + int(rng.uniform_int(0, 1));
    int eff_h = (d.kh - 1) * d.dil + 1, eff_w = (d.kw - 1) * d.dil + 1;
    d.h = eff_h + int(rng.uniform_int(0, 8));
    d.w = eff_w + int(rng.uniform_int(0, 8));
    d.oh = (d.h + 2 * d.pad - eff_h) / d.stride + 1;
    d.ow = (d.w + 2 * d.pad - eff_w) / d.stride + 1;

    auto x = rand_vec(size_t(d.n) * d.cin * d.h * d.w, rng);
    auto w = rand_vec(size_t(d.cout) * d.cin * d.kh * d.kw, rng);
    auto bias = rand_vec(size_t(d.cout), rng);
    auto gy = rand_vec(size_t(d.n) * d.cout * d.oh * d.ow, rng);

    std::vector<float> ys(gy.size()), yp(gy.size());
    k::serial::conv2d_fwd(x.data(), w.data(), bias.data(), ys.data(), d);
    k::par::conv2d_fwd(x.data(), w.data(), bias.data(), yp.data(), d);
    CHECK(same_bits(ys, yp));

    std::vector<float> gxs(x.size(), 0.f), gxp(x.size(), 0.f);
    k::serial::conv2d_bwd_x(gxs.data(), gy.data(), w.data(), d);
    k::par::conv2d_bwd_x(gxp.data(), gy.data(), w.data(), d);
    CHECK(same_bits(gxs, gxp));

    std::vector<float> gws(w.size(), 0.f), gwp(w.size(), 0.f);
    k::serial::conv2d_bwd_w(gws.data(), x.data(), gy.data(), d);
    k::par::conv2d_bwd_w(gwp.data(), x.data(), gy.data(), d);
    CHECK(same_bits(gws, gwp));

    std::vector<float> gbs(bias.size(), 0.f), gbp(bias.size(), 0.f);
    k::serial::conv2d_bwd_bias(gbs.data(), gy.data(), d);
    k::par::conv2d_bwd_bias(gbp.data(), gy.data(), d);
    CHECK(same_bits(gbs, gbp));
  }
}

TEST_CASE("attention, softmax, layernorm, bilinear agree across backends") {
  Rng rng(4);
  for (int it = 0; it < 8; ++it) {
    int heads = 1 + int(rng.uniform_int(0, 1));
    int dh = 1 + int(rng.uniform_int(0, 7));
    int dim = heads * dh;
    int nq = 1 + int(rng.uniform_int(0, 15)), nk = 1 + int(rng.uniform_int(0, 15));
    auto q = rand_vec(size_t(nq) * dim, rng), kx = rand_vec(size_t(nk) * dim, rng),
         v = rand_vec(size_t(nk) * dim, rng), gy = rand_vec(size_t(nq) * dim, rng);
    std::vector<float> ys(size_t(nq) * dim), yp(ys.size());
    std::vector<float> ps(size_t(heads) * nq * nk), pp(ps.size());
    k::serial::attention_fwd(q.data(), kx.data(), v.data(), ys.data(), ps.data(), heads, nq,
                             nk, dim);
    k::par::attention_fwd(q.data(), kx.data(), v.data(), yp.data(), pp.data(), heads, nq, nk,
                          dim);
    CHECK(same_bits(ys, yp));
    CHECK(same_bits(ps, pp));

    std::vector<float> gqs(q.size(), 0.f), gqp(q.size(), 0.f), gks(kx.size(), 0.f),
        gkp(kx.size(), 0.f), gvs(v.size(), 0.f), gvp(v.size(), 0.f);
    k::serial::attention_bwd(gqs.data(), gks.data(), gvs.data(), gy.data(), q.data(),
                             kx.data(), v.data(), ps.data(), heads, nq, nk, dim);
    k::par::attention_bwd(gqp.data(), gkp.data(), gvp.data(), gy.data(), q.data(), kx.data(),
                          v.data(), pp.data(), heads, nq, nk, dim);
    CHECK(same_bits(gqs, gqp));
    CHECK(same_bits(gks, gkp));
    CHECK(same_bits(gvs, gvp));

    int rows = 1 + int(rng.uniform_int(0, 12)), cols = 1 + int(rng.uniform_int(0, 12));
    auto x = rand_vec(size_t(rows) * cols, rng);
    std::vector<float> ss(x.size()), sp(x.size());
    k::serial::softmax_fwd(x.data(), ss.data(), rows, cols);
    k::par::softmax_fwd(x.data(), sp.data(), rows, cols);
    CHECK(same_bits(ss, sp));

    auto gamma = rand_vec(size_t(cols), rng), beta = rand_vec(size_t(cols), rng);
    std::vector<float> lns(x.size()), lnp(x.size());
    std::vector<float> ms(static_cast<size_t>(rows)), rs(static_cast<size_t>(rows)),
        mp(static_cast<size_t>(rows)), rp(static_cast<size_t>(rows));
    k::serial::layernorm_fwd(x.data(), gamma.data(), beta.data(), lns.data(), ms.data(),
                             rs.data(), rows, cols);
    k::par::layernorm_fwd(x.data(), gamma.data(), beta.data(), lnp.data(), mp.data(),
                          rp.data(), rows, cols);
    CHECK(same_bits(lns, lnp));

    int c = 1 + int(rng.uniform_int(0, 2)), ih = 2 + int(rng.uniform_int(0, 6)),
        iw = 2 + int(rng.uniform_int(0, 6));
    int oh = 1 + int(rng.uniform_int(0, 12)), ow = 1 + int(rng.uniform_int(0, 12));
    auto bx = rand_vec(size_t(c) * ih * iw, rng);
    std::vector<float> bs(size_t(c) * oh * ow), bp(bs.size());
    k::serial::bilinear_fwd(bx.data(), bs.data(), c, ih, iw, oh, ow);
    k::par::bilinear_fwd(bx.data(), bp.data(), c, ih, iw, oh, ow);
    CHECK(same_bits(bs, bp));

    auto bgy = rand_vec(bs.size(), rng);
    std::vector<float> bgs(bx.size(), 0.f), bgp(bx.size(), 0.f);
    k::serial::bilinear_bwd(bgs.data(), bgy.data(), c, ih, iw, oh, ow);
    k::par::bilinear_bwd(bgp.data(), bgy.data(), c, ih, iw, oh, ow);
    CHECK(same_bits(bgs, bgp));
  }
}

TEST_CASE("reductions and normalize agree across backends") {
  Rng rng(5);
  for (int it = 0; it < 8; ++it) {
    int64_t outer = 1 + rng.uniform_int(0, 5), red = 1 + rng.uniform_int(0, 6),
            inner = 1 + rng.uniform_int(0, 5);
    auto x = rand_vec(size_t(outer * red * inner), rng);
    std::vector<float> ys(size_t(outer * inner)), yp(ys.size());
    k::serial::axis_sum_fwd(x.data(), ys.data(), outer, red, inner);
    k::par::axis_sum_fwd(x.data(), yp.data(), outer, red, inner);
    CHECK(same_bits(ys, yp));

    std::vector<float> ns(size_t(outer * inner)), np(ns.size());
    std::vector<float> l2s(x.size()), l2p(x.size());
    k::serial::l2_normalize_fwd(x.data(), l2s.data(), ns.data(), outer, red, inner, 1e-8f);
    k::par::l2_normalize_fwd(x.data(), l2p.data(), np.data(), outer, red, inner, 1e-8f);
    CHECK(same_bits(l2s, l2p));

    CHECK(k::serial::reduce_sum(x.data(), int64_t(x.size())) ==
          k::par::reduce_sum(x.data(), int64_t(x.size())));
    CHECK(k::serial::all_finite(x.data(), int64_t(x.size())) ==
          k::par::all_finite(x.data(), int64_t(x.size())));
  }
}
