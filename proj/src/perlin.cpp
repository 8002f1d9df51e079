#include "stlm/perlin.hpp"

#include <cmath>
#include <stdexcept>

#include "stlm/rng.hpp"

namespace stlm {

namespace {

inline float fade(float t) { return t * t * t * (t * (t * 6.f - 15.f) + 10.f); }

}  // namespace

std::vector<float> perlin_raw(int h, int w, int period, uint64_t seed) {
  if (period < 1) throw std::invalid_argument("perlin: period must be >= 1");
  if (period > h || period > w)
    throw std::invalid_argument("perlin: period exceeds image extent");
  const int gy = h / period + 2, gx = w / period + 2;
  std::vector<float> grad(size_t(gy) * gx * 2);
  Rng rng(seed);
  for (int i = 0; i < gy * gx; ++i) {
    double a = rng.uniform(0.0, 6.283185307179586);
    grad[size_t(i) * 2] = float(std::cos(a));
    grad[size_t(i) * 2 + 1] = float(std::sin(a));
  }
  const auto g = [&](int cy, int cx) { return &grad[(size_t(cy) * gx + cx) * 2]; };

  std::vector<float> out(size_t(h) * w);
  const float inv = 1.f / float(period);
  for (int y = 0; y < h; ++y) {
    float fy = y * inv;
    int j0 = int(fy);
    float ty = fy - float(j0);
    float uy = fade(ty);
    for (int x = 0; x < w; ++x) {
      float fx = x * inv;
      int i0 = int(fx);
      float tx = fx - float(i0);
      float ux = fade(tx);
      const float* g00 = g(j0, i0);
      const float* g01 = g(j0, i0 + 1);
      const float* g10 = g(j0 + 1, i0);
      const float* g11 = g(j0 + 1, i0 + 1);
      float d00 = g00[0] * tx + g00[1] * ty;
      float d01 = g01[0] * (tx - 1.f) + g01[1] * ty;
      float d10 = g10[0] * tx + g10[1] * (ty - 1.f);
      float d11 = g11[0] * (tx - 1.f) + g11[1] * (ty - 1.f);
      float top = d00 + ux * (d01 - d00);
      float bot = d10 + ux * (d11 - d10);
      out[size_t(y) * w + x] = top + uy * (bot - top);
    }
  }
  return out;
}

std::vector<float> perlin_noise(int h, int w, const PerlinParams& params, uint64_t seed) {
  if (h < 8 || w < 8) throw std::invalid_argument("perlin: image extents must be >= 8");
  const int ext = h < w ? h : w;
  if (params.period_min > ext)
    throw std::invalid_argument("perlin: period exceeds image extent");
  const int pmax = params.period_max < ext ? params.period_max : ext;
  Rng rng(seed);
  int base = int(rng.uniform_int(params.period_min, pmax));

  std::vector<float> sum(size_t(h) * w, 0.f);
  float amp = 1.f;
  for (int o = 0; o < params.octaves; ++o) {
    int period = base >> o;
    if (period < 2) break;
    auto field = perlin_raw(h, w, period, rng.next());
    for (size_t i = 0; i < sum.size(); ++i) sum[i] += amp * field[i];
    amp *= float(params.persistence);
  }

  float lo = sum[0], hi = sum[0];
  for (float v : sum) {
    lo = v < lo ? v : lo;
    hi = v > hi ? v : hi;
  }
  float range = hi - lo;
  if (range <= 0.f) return std::vector<float>(sum.size(), 0.f);
  for (auto& v : sum) v = (v - lo) / range;
  return sum;
}

std::vector<uint8_t> make_mask(const std::vector<float>& noise, double threshold) {
  std::vector<uint8_t> m(noise.size());
  for (size_t i = 0; i < noise.size(); ++i) m[i] = noise[i] > float(threshold) ? 1 : 0;
  return m;
}

}  // namespace stlm
